"""Simulate a response dataset and prepare it for adaptive-testing runs.

Walks through the data layer: synthetic generation from a one-parameter
logistic model, the student-level train/validation/test split, and the
per-student partition into an inner selection pool and a held-out meta set.
"""


from bilevelcat import generate_synthetic, partition_questions, split_students

ds, truth = generate_synthetic(n_students=300, n_questions=40, density=0.6, seed=7)
print(f"{ds.num_students} students x {ds.num_questions} questions, "
      f"{ds.num_records} records, mean correctness {ds.correct.mean():.3f}")

ds = split_students(ds, (0.6, 0.2, 0.2), seed=8)
for tag in ("train", "validation", "test"):
    print(f"  {tag:>10}: {len(ds.students_with_tag(tag))} students")

partition = partition_questions(ds, omega_fraction=0.8, seed=9)
partition.validate_against(ds)
sizes = [(len(partition.omega[i]), len(partition.gamma[i])) for i in range(5)]
print("first five students' (inner, meta) sizes:", sizes)

# the generator's ground truth lets downstream estimates be checked
abilities = truth["abilities"]
print(f"true abilities: mean {abilities.mean():+.3f}, std {abilities.std():.3f}")
print("per-student records always cover both partition sides:",
      all(len(partition.omega[i]) >= 1 and len(partition.gamma[i]) >= 1
          for i in range(ds.num_students)))
