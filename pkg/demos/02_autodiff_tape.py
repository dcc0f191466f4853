"""Tour of the reverse-mode tape that powers training.

Everything recorded on a tape can be differentiated with one backward
sweep; `grad_check` compares those gradients against central finite
differences computed on fresh tapes.
"""

import numpy as np

from bilevelcat import Tape, grad_check

# scalars: d/dx log(sigmoid(x)) at 0 is 1 - sigmoid(0) = 0.5
tape = Tape()
x = tape.lift(0.0)
out = tape.log(tape.sigmoid(x))
print("value:", out.value, " gradient:", tape.backward(out)[x.index])

# vectors: a tiny logistic loss with a masked softmax attention over terms
tape = Tape()
logits = tape.lift(np.array([0.2, -1.0, 0.7, 0.0]))
mask = np.array([True, True, False, True])
probs = tape.masked_softmax(logits, mask)
entropy = tape.entropy(probs)
print("masked probs:", np.round(probs.value, 4), " entropy:", round(entropy.value, 4))
grads = tape.backward(entropy)
print("d entropy / d logits:", np.round(grads[logits.index], 4))

# the finite-difference harness scores any scalar function of a vector
def fn(t, v):
    hidden = t.tanh(t.mul(v, 1.7))
    return t.dot(hidden, hidden)

err = grad_check(fn, np.array([0.3, -0.8, 1.2]), eps=1e-5)
print(f"grad_check max relative error: {err:.2e}")
