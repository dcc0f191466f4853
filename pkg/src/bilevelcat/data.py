"""Response datasets, cohort splits, per-student question partitions, and the
policy-input encoding of partial response histories.

A dataset is a sparse set of (student, question, correct) records with dense
integer ids. Students carry a train/validation/test tag; each student's
answered questions are further partitioned into an inner set (the selection
pool used while adapting the ability estimate) and a held-out meta set (used
to score the adapted estimate). All types here are immutable after
construction and safe to share across workers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ArgumentError, IntegrityError, ParseError
from .numerics import format_float, sigmoid

SPLIT_TAGS = ("train", "validation", "test")
CSV_HEADER = ("student_id", "question_id", "correct")
TRUTH_HEADER = ("entity", "index", "value")


@dataclass(frozen=True)
class ResponseDataset:
    """Sparse binary-correctness records with split tags.

    Record arrays are aligned: record k says student `student_idx[k]` answered
    question `question_idx[k]` with correctness `correct[k]`. Ids are dense in
    [0, num_students) and [0, num_questions); the original labels from the
    source file are retained for reporting.
    """

    num_students: int
    num_questions: int
    student_idx: np.ndarray
    question_idx: np.ndarray
    correct: np.ndarray
    split_tags: np.ndarray
    student_labels: tuple[str, ...]
    question_labels: tuple[str, ...]

    def __post_init__(self):
        n, q = self.num_students, self.num_questions
        if not (len(self.student_idx) == len(self.question_idx) == len(self.correct)):
            raise IntegrityError("record arrays are not aligned")
        if len(self.student_idx) and (
            self.student_idx.min() < 0 or self.student_idx.max() >= n
        ):
            raise IntegrityError("student id out of range")
        if len(self.question_idx) and (
            self.question_idx.min() < 0 or self.question_idx.max() >= q
        ):
            raise IntegrityError("question id out of range")
        if not np.isin(self.correct, (0, 1)).all():
            raise IntegrityError("correctness values must be 0 or 1")
        keys = self.student_idx.astype(np.int64) * q + self.question_idx
        if len(np.unique(keys)) != len(keys):
            raise IntegrityError("duplicate (student, question) record")
        unknown = set(self.split_tags) - set(SPLIT_TAGS)
        if unknown:
            raise IntegrityError(f"unknown split tags {sorted(unknown)}")
        counts = np.bincount(self.student_idx, minlength=n)
        if (counts < 2).any():
            bad = self.student_labels[int(np.argmin(counts))]
            raise IntegrityError(
                f"student {bad!r} has fewer than 2 records; "
                "both question partitions need at least one entry"
            )
        order = np.argsort(self.student_idx, kind="stable")
        bounds = np.searchsorted(self.student_idx[order], np.arange(n + 1))
        by_student = tuple(
            order[bounds[i] : bounds[i + 1]] for i in range(n)
        )
        object.__setattr__(self, "_records_by_student", by_student)

    @property
    def num_records(self) -> int:
        return len(self.student_idx)

    def records_of(self, student: int) -> np.ndarray:
        """Record indices belonging to one student."""
        return self._records_by_student[student]

    def answered(self, student: int) -> np.ndarray:
        """Question ids the student has a recorded response for."""
        return self.question_idx[self.records_of(student)]

    def response_vector(self, student: int) -> tuple[np.ndarray, np.ndarray]:
        """(y, answered_mask): y is 0/1 over the full pool, 0 where unanswered."""
        y = np.zeros(self.num_questions)
        mask = np.zeros(self.num_questions, dtype=bool)
        recs = self.records_of(student)
        y[self.question_idx[recs]] = self.correct[recs]
        mask[self.question_idx[recs]] = True
        return y, mask

    def students_with_tag(self, tag: str) -> np.ndarray:
        if tag not in SPLIT_TAGS:
            raise ArgumentError(f"unknown split tag {tag!r}")
        return np.flatnonzero(self.split_tags == tag)


@dataclass(frozen=True)
class InnerOuterPartition:
    """Per-student split of answered questions into inner and meta sets.

    `omega[i]` is the selection pool used during adaptation, `gamma[i]` the
    held-out meta set the adapted ability is scored on. Both are sorted
    arrays; per student they are disjoint, nonempty, and cover the answered
    set.
    """

    omega: tuple[np.ndarray, ...]
    gamma: tuple[np.ndarray, ...]

    def validate_against(self, ds: ResponseDataset) -> None:
        if len(self.omega) != ds.num_students or len(self.gamma) != ds.num_students:
            raise IntegrityError("partition does not cover every student")
        for i in range(ds.num_students):
            om, ga = self.omega[i], self.gamma[i]
            if len(om) == 0 or len(ga) == 0:
                raise IntegrityError(f"student {i} has an empty partition side")
            if np.intersect1d(om, ga).size:
                raise IntegrityError(f"student {i} partition sides overlap")
            answered = np.sort(ds.answered(i))
            if not np.array_equal(np.sort(np.concatenate([om, ga])), answered):
                raise IntegrityError(f"student {i} partition does not cover answers")


def _encode(selected, responses, q_pool_size: int) -> np.ndarray:
    vec = np.zeros(q_pool_size)
    for q, y in zip(selected, responses):
        vec[q] = 1.0 if y else -1.0
    return vec


@dataclass(frozen=True)
class EpisodeState:
    """One student's in-progress adaptive test.

    `input_vec` is the signed ternary encoding of the history: +1 where a
    selected question was answered correctly, -1 where incorrectly, 0
    elsewhere. States are immutable; `extend` returns the successor state.
    """

    student_id: int
    selected: tuple[int, ...]
    responses: tuple[int, ...]
    input_vec: np.ndarray
    theta: float | np.ndarray | None = None

    def __post_init__(self):
        if len(self.selected) != len(self.responses):
            raise IntegrityError("selected/responses length mismatch")
        if len(set(self.selected)) != len(self.selected):
            raise IntegrityError("a question was selected twice")

    @classmethod
    def fresh(cls, student_id: int, q_pool_size: int, theta=None) -> "EpisodeState":
        return cls(student_id, (), (), np.zeros(q_pool_size), theta)

    def extend(self, question: int, correct: int, theta=None) -> "EpisodeState":
        selected = self.selected + (int(question),)
        responses = self.responses + (int(correct),)
        return EpisodeState(
            self.student_id,
            selected,
            responses,
            _encode(selected, responses, len(self.input_vec)),
            self.theta if theta is None else theta,
        )


def encode_policy_input(state: EpisodeState, q_pool_size: int) -> np.ndarray:
    """Signed ternary history encoding, length `q_pool_size`."""
    return _encode(state.selected, state.responses, q_pool_size)


def _build(
    n_students: int,
    n_questions: int,
    triples,
    student_labels,
    question_labels,
    split_tags=None,
) -> ResponseDataset:
    student_idx = np.array([t[0] for t in triples], dtype=np.int32)
    question_idx = np.array([t[1] for t in triples], dtype=np.int32)
    correct = np.array([t[2] for t in triples], dtype=np.int8)
    if split_tags is None:
        split_tags = np.full(n_students, "train", dtype="<U10")
    return ResponseDataset(
        n_students,
        n_questions,
        student_idx,
        question_idx,
        correct,
        split_tags,
        tuple(student_labels),
        tuple(question_labels),
    )


def load_csv(path) -> ResponseDataset:
    """Read `student_id,question_id,correct` records, re-indexing ids densely.

    Ids may be arbitrary strings; they are mapped to dense integers in order
    of first appearance and the original labels are retained.
    """
    path = Path(path)
    student_map: dict[str, int] = {}
    question_map: dict[str, int] = {}
    seen: set[tuple[int, int]] = set()
    triples: list[tuple[int, int, int]] = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ParseError(
                f"{path}: expected header {','.join(CSV_HEADER)!r}, got {header!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"{path}: line {lineno}: expected 3 columns, got {len(row)}")
            sid, qid, val = (c.strip() for c in row)
            if val not in ("0", "1"):
                raise ParseError(
                    f"{path}: line {lineno}: correct must be 0 or 1, got {val!r}"
                )
            i = student_map.setdefault(sid, len(student_map))
            j = question_map.setdefault(qid, len(question_map))
            if (i, j) in seen:
                raise IntegrityError(
                    f"{path}: line {lineno}: duplicate record for ({sid}, {qid})"
                )
            seen.add((i, j))
            triples.append((i, j, int(val)))
    if not triples:
        raise ParseError(f"{path}: no data rows")
    return _build(len(student_map), len(question_map), triples, student_map, question_map)


def write_csv(ds: ResponseDataset, path) -> None:
    """Write records back out with their original labels (UTF-8, LF)."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for i, j, y in zip(ds.student_idx, ds.question_idx, ds.correct):
            fh.write(f"{ds.student_labels[i]},{ds.question_labels[j]},{int(y)}\n")


def write_truth_csv(path, abilities: np.ndarray, difficulties: np.ndarray) -> None:
    """Ground-truth sidecar for synthetic data: `entity,index,value` rows."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(TRUTH_HEADER) + "\n")
        for i, v in enumerate(abilities):
            fh.write(f"ability,{i},{format_float(v)}\n")
        for j, v in enumerate(difficulties):
            fh.write(f"difficulty,{j},{format_float(v)}\n")


def load_truth_csv(path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    abilities: dict[int, float] = {}
    difficulties: dict[int, float] = {}
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != TRUTH_HEADER:
            raise ParseError(f"{path}: expected header {','.join(TRUTH_HEADER)!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3 or row[0] not in ("ability", "difficulty"):
                raise ParseError(f"{path}: line {lineno}: malformed truth row")
            target = abilities if row[0] == "ability" else difficulties
            target[int(row[1])] = float(row[2])
    return (
        np.array([abilities[k] for k in sorted(abilities)]),
        np.array([difficulties[k] for k in sorted(difficulties)]),
    )


def write_split_csv(ds: ResponseDataset, path) -> None:
    """Persist split tags as `student_id,split` rows (original labels)."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write("student_id,split\n")
        for i in range(ds.num_students):
            fh.write(f"{ds.student_labels[i]},{ds.split_tags[i]}\n")


def apply_split_csv(ds: ResponseDataset, path) -> ResponseDataset:
    """Tag a dataset from a `student_id,split` file written by `write_split_csv`."""
    path = Path(path)
    label_to_id = {label: i for i, label in enumerate(ds.student_labels)}
    tags = np.empty(ds.num_students, dtype="<U10")
    tags[:] = ""
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != ("student_id", "split"):
            raise ParseError(f"{path}: expected header 'student_id,split'")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise ParseError(f"{path}: line {lineno}: expected 2 columns")
            label, tag = row[0].strip(), row[1].strip()
            if label not in label_to_id:
                raise IntegrityError(f"{path}: line {lineno}: unknown student {label!r}")
            if tag not in SPLIT_TAGS:
                raise ParseError(f"{path}: line {lineno}: unknown split {tag!r}")
            tags[label_to_id[label]] = tag
    if (tags == "").any():
        missing = ds.student_labels[int(np.argmax(tags == ""))]
        raise IntegrityError(f"{path}: student {missing!r} has no split tag")
    return replace(ds, split_tags=tags)


def generate_synthetic(
    n_students: int, n_questions: int, density: float, seed
) -> tuple[ResponseDataset, dict[str, np.ndarray]]:
    """Simulate a one-parameter logistic response matrix.

    Abilities and difficulties are standard normal; a cell is retained with
    probability `density` (each student keeps at least 2 cells) and answered
    correctly with probability sigmoid(ability - difficulty). Deterministic
    given the seed. Returns the dataset and the generating ground truth.
    """
    if n_students < 2 or n_questions < 2:
        raise ArgumentError("need at least 2 students and 2 questions")
    if not 0.0 < density <= 1.0:
        raise ArgumentError(f"density must be in (0, 1], got {density}")
    rng = np.random.default_rng(seed)
    abilities = rng.standard_normal(n_students)
    difficulties = rng.standard_normal(n_questions)
    keep = rng.random((n_students, n_questions)) < density
    u = rng.random((n_students, n_questions))
    for i in range(n_students):
        short = 2 - int(keep[i].sum())
        if short > 0:
            missing = np.flatnonzero(~keep[i])
            keep[i, rng.choice(missing, size=short, replace=False)] = True
    prob = sigmoid(abilities[:, None] - difficulties[None, :])
    correct = (u < prob).astype(np.int8)
    students, questions = np.nonzero(keep)
    triples = list(zip(students.tolist(), questions.tolist(), correct[keep].tolist()))
    ds = _build(
        n_students,
        n_questions,
        triples,
        [str(i) for i in range(n_students)],
        [str(j) for j in range(n_questions)],
    )
    return ds, {"abilities": abilities, "difficulties": difficulties}


def _ratio_counts(total: int, ratios) -> list[int]:
    targets = [r * total for r in ratios]
    counts = [int(np.floor(t)) for t in targets]
    remainders = [t - c for t, c in zip(targets, counts)]
    for k in sorted(range(len(ratios)), key=lambda k: -remainders[k])[
        : total - sum(counts)
    ]:
        counts[k] += 1
    return counts


def split_students(ds: ResponseDataset, ratios, seed) -> ResponseDataset:
    """Assign each student one of train/validation/test per the given ratios.

    Counts honor the ratios within integer rounding (largest remainder);
    assignment is a seeded permutation.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ArgumentError("ratios must be 3 nonnegative numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ArgumentError(f"ratios must sum to 1, got {sum(ratios)}")
    counts = _ratio_counts(ds.num_students, ratios)
    rng = np.random.default_rng(seed)
    order = rng.permutation(ds.num_students)
    tags = np.empty(ds.num_students, dtype="<U10")
    start = 0
    for tag, count in zip(SPLIT_TAGS, counts):
        tags[order[start : start + count]] = tag
        start += count
    return replace(ds, split_tags=tags)


def partition_questions(
    ds: ResponseDataset, omega_fraction: float, seed
) -> InnerOuterPartition:
    """Randomly split each student's answered questions into inner/meta sets.

    The inner side gets round(fraction * n) questions, clipped so both sides
    stay nonempty. Deterministic given the seed.
    """
    if not 0.0 < omega_fraction < 1.0:
        raise ArgumentError(f"omega_fraction must be in (0, 1), got {omega_fraction}")
    rng = np.random.default_rng(seed)
    omega, gamma = [], []
    for i in range(ds.num_students):
        answered = ds.answered(i)
        if len(answered) < 2:
            raise IntegrityError(
                f"student {ds.student_labels[i]!r} has fewer than 2 records"
            )
        shuffled = rng.permutation(answered)
        n_omega = int(np.clip(round(omega_fraction * len(answered)), 1, len(answered) - 1))
        omega.append(np.sort(shuffled[:n_omega]))
        gamma.append(np.sort(shuffled[n_omega:]))
    return InnerOuterPartition(tuple(omega), tuple(gamma))
