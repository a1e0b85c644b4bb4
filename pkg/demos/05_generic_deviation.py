"""Arbitrary imperfections through a single deviation parameter q.

If the imperfect measurement dominates (1-q) times the ideal one
elementwise, a noise channel exists that surrenders exactly weight q of
the preserved state to the flags.  The best q is found by bisection, and
an operator-norm error bound can always be converted into this form by
mixing in uniform noise.
"""

import numpy as np

import detcert as dc
from detcert import EventTable, SquashedPOVM
from detcert.fock import BlockOperator, SpaceLayout

rng = np.random.default_rng(5)
layout = SpaceLayout((("m=0", 1), ("m=1", 2), ("flag", 3)))
events = EventTable(
    k=2, labels=("no-click", "a", "b"), classes=("no-click", "single", "single"), masks=()
)


def random_target(rng):
    mats = {lab: [] for lab in ("m=0", "m=1")}
    for lab in mats:
        d = layout.dim(lab)
        raw = [
            (lambda g: g @ g.conj().T + 0.1 * np.eye(d))(
                rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            )
            for _ in range(3)
        ]
        w = np.linalg.inv(np.linalg.cholesky(sum(raw)))
        mats[lab] = [w @ m @ w.conj().T for m in raw]
    elements = []
    for i in range(3):
        flag = np.zeros((3, 3))
        flag[i, i] = 1.0
        elements.append(
            BlockOperator(
                layout, {"m=0": mats["m=0"][i], "m=1": mats["m=1"][i], "flag": flag}
            )
        )
    return SquashedPOVM(layout, elements, events)


f_ideal = random_target(rng)
q_povm = random_target(rng)
q0 = 0.25
f_noise = SquashedPOVM(
    layout,
    [(1 - q0) * a + q0 * b for a, b in zip(f_ideal.elements, q_povm.elements)],
    events,
)

q_min = dc.min_deviation_q(f_noise, f_ideal)
print(f"measurement mixed with weight {q0}: smallest admissible q = {q_min:.6f}")

channel = dc.generic_channel(f_noise, f_ideal, q_min)
print("CPTP:", dc.verify_cptp(channel, 1e-9).passed)
stats = dc.verify_statistics_equivalence(None, f_noise, f_ideal, channel)
print(f"noisy statistics from the ideal measurement: residual {stats.max_residual:.1e}")

proj = layout.projector(("m=0", "m=1"))
rho = dc.random_density(layout, rng).to_dense()
kept = np.trace(proj @ channel.apply_dense(rho)).real / np.trace(proj @ rho).real
print(f"preserved weight scales by exactly 1 - q: {kept:.6f} vs {1 - q_min:.6f}")

delta = 0.05
mixed = dc.inf_norm_mixing(f_noise, delta)
scale = 1.0 / (1.0 + len(f_noise) * delta)
print(f"\noperator-norm route at delta = {delta}:")
ok = all(
    dc.psd_check(a - scale * b, 1e-10)
    for a, b in zip(mixed.elements, f_noise.elements)
)
print("mixed measurement dominates the scaled original elementwise:", ok)
