# Why the numbers can be trusted: three independent lines of evidence.
# An AA pool measures the real false-positive rate of the whole stack,
# a controlled-input probe proves no event is lost between generation
# and aggregation, and a coverage sweep confirms the confidence
# intervals hold their advertised level. Scaled down here to finish in
# seconds; the acceptance suite runs the full-size versions.

from splitlab import aa_pool_run, coverage_run
from splitlab.eventlog import FilteredReader, MemoryEventLog
from splitlab.metrics import MetricCatalog
from splitlab.pipeline_rt import RtPipeline
from splitlab.quality import make_controlled_scenario, run_controlled_input_check

# --- AA pool ----------------------------------------------------------
# 60 experiments whose treatment IS the control. Every significant
# result is a false positive by construction, so the rejection rate
# measures the stack's true alpha and the p-values should be uniform.
pool = aa_pool_run(60, per_experiment_n=2_000, alpha=0.05, seed=2026)
print(f"AA pool: {pool.fpr.n_false_positives}/{pool.fpr.n_experiments}"
      f" false positives ({pool.fpr.rate:.1%}),"
      f" 99% band [{pool.fpr.interval_low:.3f}, {pool.fpr.interval_high:.3f}],"
      f" calibrated: {pool.fpr.calibrated}")
print("p-value deciles:", [round(f, 2) for f in pool.decile_fractions])

# --- Controlled-input probe -------------------------------------------
# Exactly 1000 scripted visits and 100 conversions go in; both
# pipelines must report exactly 1000 and 100. Then we withhold 10
# conversion events and demand the check fail by exactly 10.
catalog = MetricCatalog.with_defaults()
log = MemoryEventLog(metric_gate=catalog)
rt = RtPipeline(FilteredReader(log, "rt"), catalog)
clean = run_controlled_input_check(
    log, rt, catalog, make_controlled_scenario(n_visits=1000,
                                               n_conversions=100),
    batch_reader=FilteredReader(log, "batch"))
print("\ncontrolled input, nothing withheld:", clean.status)

log = MemoryEventLog(metric_gate=catalog)
rt = RtPipeline(FilteredReader(log, "rt"), catalog)
starved = run_controlled_input_check(
    log, rt, catalog, make_controlled_scenario(n_visits=1000,
                                               n_conversions=100,
                                               withhold=10),
    batch_reader=FilteredReader(log, "batch"))
print("controlled input, 10 withheld:", starved.status)
for row in starved.mismatches:
    print(f"  {row.pipeline}: {row.metric_name}.{row.field}"
          f" expected {row.expected:.0f}, observed {row.observed:.0f}"
          f" (deficit {row.deficit:.0f})")

# --- CI coverage ------------------------------------------------------
# Inject a known +1pp lift and repeat the whole experiment 40 times:
# the 95% interval should contain the true lift in roughly 95% of runs.
coverage = coverage_run(40, n_per_arm=10_000, baseline_rate=0.05,
                        lift=0.01, seed=3)
print(f"\nCI coverage: {coverage.covered}/{coverage.runs} runs"
      f" covered the true +1pp lift ({coverage.coverage:.0%})")
