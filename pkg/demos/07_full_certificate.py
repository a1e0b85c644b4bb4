"""The full pipeline: descriptor in, machine-readable certificate out.

Equivalent to ``detcert analyze descriptors/passive_bb84.json``.  The
certificate echoes the descriptor, records every residual with the
operation that reproduces it, and serializes deterministically.
"""

from pathlib import Path

from detcert import load_descriptor, run_analysis
from detcert.report import canonical_json

root = Path(__file__).resolve().parents[1]
descriptor = load_descriptor(root / "descriptors" / "passive_bb84.json")
certificate = run_analysis(descriptor)

print("status:", certificate.status)
print("derived quantities:")
for key, value in sorted(certificate.derived.items()):
    print(f"  {key:20s} {value}")
print(f"{len(certificate.checks)} checks, all passed: {certificate.all_passed}")
worst = max(c["residual"] for c in certificate.checks)
print(f"worst residual across all checks: {worst:.2e}")

print("\nfirst check, as serialized:")
print(canonical_json(certificate.checks[0]))
