# Deterministic assignment: the same visitor always lands in the same
# variant, with no storage involved. Assignment is a pure function of
# (tracking method, raw identifier, per-experiment salt), so any number
# of servers agree without talking to each other.

from splitlab import (AssignmentSpec, ExperimentState, MethodRegistry,
                      VisitorIdentity, assign, bucket_of)

methods = MethodRegistry()

spec = AssignmentSpec(
    experiment_key="checkout-button-color",
    salt="6f1d2c3b4a59687700112233445566aa",
    tracking_method="cookie",
    variant_weights=(1, 1),
    exposure_buckets=1000,   # fully ramped: all 1000 buckets exposed
    state=ExperimentState.RUNNING,
)
spec.validate()

# A visitor's bucket is stable across calls, days, and machines.
visitor = VisitorIdentity("cookie", "f00dcafe01234567")
print("bucket:", bucket_of(visitor, spec.salt))
for _ in range(3):
    outcome = assign(spec, visitor, methods)
    print("assigned variant", outcome.variant_index,
          "| recruited:", outcome.recruited, "| reason:", outcome.reason)

# Different salt, different shuffle: the same visitor redraws
# independently in every experiment, so experiments never correlate.
other = AssignmentSpec(
    experiment_key="ranking-model-swap",
    salt="00112233445566778899aabbccddeeff",
    tracking_method="cookie",
    variant_weights=(1, 1),
    exposure_buckets=1000,
    state=ExperimentState.RUNNING,
)
print("same visitor, other experiment:",
      assign(other, visitor, methods).variant_index)

# Ramping: exposure_buckets limits recruitment to a prefix of the
# bucket wheel. At 100 of 1000 buckets, roughly 10% of traffic enters;
# everyone else gets the control experience without being recorded.
ramped = AssignmentSpec(
    experiment_key="checkout-button-color",
    salt=spec.salt,
    tracking_method="cookie",
    variant_weights=(1, 1),
    exposure_buckets=100,
    state=ExperimentState.RUNNING,
)
entered = sum(
    assign(ramped, VisitorIdentity("cookie", f"{i:016x}"), methods).recruited
    for i in range(10_000)
)
print(f"recruited at 10% ramp: {entered} of 10000")

# Unknown identifiers are never guessed at: the visitor sees control
# and the report carries an explicit unknown-identifier rate instead.
broken = assign(spec, VisitorIdentity("cookie", ""), methods)
print("empty id ->", broken.reason, "| variant", broken.variant_index)
