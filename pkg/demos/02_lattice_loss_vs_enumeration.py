"""The alignment-marginalizing loss, cross-checked against literal path
enumeration, plus the total-probability slice invariant of the
forward/backward tables."""

import numpy as np

from streamslu import autodiff as ad
from streamslu import ctc

# The classic hand-checkable case: two frames, one label A, uniform
# probabilities 0.5 over {A, blank}. Valid paths: AA, A_, _A. P = 3/4.
lattice = np.log(np.full((2, 2), 0.5))
res = ctc.ctc_loss(lattice, [0], blank=1)
print(f"uniform 2-frame loss: {res.loss:.6f}  (-ln 0.75 = {-np.log(0.75):.6f})")
print(f"enumeration oracle:   {ctc.ctc_loss_bruteforce(lattice, [0], blank=1):.6f}")

# A bigger random instance: the recursion and the enumeration agree to 1e-9.
rng = np.random.default_rng(1)
T, V = 7, 3
logits = rng.normal(size=(T, V + 1)) * 2
lattice = np.vstack([ad.log_softmax(row) for row in logits])
labels = [0, 2]
fast = ctc.ctc_loss(lattice, labels, blank=V).loss
slow = ctc.ctc_loss_bruteforce(lattice, labels, blank=V)
print(f"\nT={T} V={V} labels={labels}: recursion {fast:.9f}, "
      f"enumeration {slow:.9f}, diff {abs(fast-slow):.2e}")

# Every time slice of the alpha/beta tables recovers the same total.
ext = ctc.expand_with_blanks(labels, blank=V)
alpha, beta = ctc.ctc_alpha_beta(lattice, ext)
for t in range(T):
    total = ad.logsumexp(alpha[t] + beta[t] - lattice[t, ext])
    print(f"  slice t={t}: logsumexp(alpha+beta-emit) = {total:.9f}")

# The gradient is minus the state-occupancy marginals: each row sums to -1.
grad = ctc.ctc_loss(lattice, labels, blank=V).grad
print(f"\nper-frame gradient row sums: {np.round(grad.sum(axis=1), 12)}")

# Too few frames cannot realize the labels; that is an error, not infinity.
try:
    ctc.ctc_loss(lattice[:1], [1, 1], blank=V)
except ctc.CtcInfeasibleError as e:
    print(f"infeasible instance rejected: {e}")
