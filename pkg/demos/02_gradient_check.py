"""Check the hand-derived backward pass against central finite differences.

Every variant's analytic gradient is compared coordinate by coordinate with
a float64 numerical oracle on a small unrolled window, with the sampled
update masks and surprisal vectors frozen across perturbations.
"""

from szlstm.gradcheck import tiny_window_check

for variant in ("standard", "sf", "fixed_zoneout", "adaptive"):
    report = tiny_window_check(variant)
    status = "ok" if report.passed() else "FAILED"
    print(f"== {variant}: max relative error {report.max_rel_err:.3e} [{status}]")
    print(report.format_table())
    print()
