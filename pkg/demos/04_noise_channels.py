"""Noise channels that hand dark counts and loss to the adversary.

Each channel is certified three ways: the Choi matrix is PSD with unit
partial trace (CPTP), the post-processed statistics of the imperfect
measurement match the ideal measurement after the channel on a full
operator basis, and the weight relations hold exactly.
"""

import numpy as np

import detcert as dc

setup = dc.passive_bb84_setup(1.0)
eta = np.array([0.5, 0.55, 0.6, 0.52])

f_eta = dc.flag_state_target(dc.build_threshold_povm(setup.with_eta(eta), 1), 1)
f_lossless = dc.flag_state_target(dc.build_threshold_povm(setup, 1), 1)

print("dark-count channel at rates (0.01, 0.02, 0.015, 0.01):")
p_db = dc.dark_count_matrix([0.01, 0.02, 0.015, 0.01])
dark = dc.dark_count_channel(p_db, f_eta)
cptp = dc.verify_cptp(dark, 1e-9)
print(f"  CPTP: {cptp.passed} (smallest Choi eigenvalue {cptp.min_choi_eigenvalue:.1e})")
stats = dc.verify_statistics_equivalence(p_db, f_eta, f_eta, dark)
print(f"  statistics equivalence residual: {stats.max_residual:.1e}")
print(f"  one-photon survival = no-dark probability {p_db.entries[0, 0]:.6f}")

print("\nloss channel to common efficiency 1.0:")
loss = dc.loss_channel(eta, 1.0, f_lossless)
f_unit = dc.flag_state_target(dc.build_threshold_povm(setup, 1), 1)
stats = dc.verify_statistics_equivalence(None, f_eta, f_unit, loss)
print(f"  CPTP: {dc.verify_cptp(loss, 1e-9).passed}")
print(f"  statistics equivalence residual: {stats.max_residual:.1e}")
print(f"  one-photon survival {eta.min() / 1.0}")

print("\ncomposition (loss after dark counts):")
combined = dc.compose(loss, dark)
stats = dc.verify_statistics_equivalence(p_db, f_eta, f_unit, combined)
print(f"  CPTP: {dc.verify_cptp(combined, 1e-9).passed}")
print(f"  statistics equivalence residual: {stats.max_residual:.1e}")

print("\nthe two-detector pedagogical channel on vacuum + qubit:")
simple = dc.bb84_simple_noise_channel(0.05)
for basis in ("Z", "X"):
    povm = dc.bb84_qubit_measurement(basis)
    stats = dc.verify_statistics_equivalence(
        dc.bb84_squashed_dark_matrix(0.05), povm, povm, simple
    )
    print(f"  basis {basis}: residual {stats.max_residual:.1e}")
