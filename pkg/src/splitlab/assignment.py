"""Deterministic visitor recruitment and randomization.

The only thing business code ever learns from this module is an
``AssignmentOutcome``: which variant to show and whether the visitor was
recruited. Everything else (who is in which experiment, what experiments
exist) stays hidden, which is the loose-coupling contract.

Randomization is a pure function: a visitor identity and an experiment
salt hash to a bucket in ``[0, bucket_count)``, the bucket prefix
``[0, exposure_buckets)`` is recruited, and the bucket maps onto variants
proportionally to the configured weights. Raising exposure widens the
prefix and never reassigns anyone already recruited. Visitors whose
identifier is unknown or malformed are always shown control and are not
recruited.
"""

from __future__ import annotations

import re
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from hashlib import blake2b
from math import gcd

from .errors import ConflictError, NotFoundError, ValidationFailure

DEFAULT_BUCKET_COUNT = 1000

REASON_RECRUITED = "recruited"
REASON_UNKNOWN = "unknown_identifier"
REASON_NOT_RUNNING = "not_running"
REASON_OUT_OF_EXPOSURE = "out_of_exposure"


class ExperimentState(str, Enum):
    DRAFT = "draft"
    RUNNING = "running"
    STOPPED = "stopped"
    CONCLUDED = "concluded"


@dataclass(frozen=True, slots=True)
class VisitorIdentity:
    """A visitor identifier within one tracking method's namespace."""

    method_name: str
    raw_id: str

    @property
    def is_unknown(self) -> bool:
        return self.raw_id == ""


UNKNOWN_IDENTITY = VisitorIdentity("", "")


@lru_cache(maxsize=256)
def _compiled(pattern: str) -> re.Pattern:
    return re.compile(pattern)


@dataclass(frozen=True, slots=True)
class TrackingMethod:
    """A pluggable identity namespace (cookie, account, hashed email, ...).

    ``validity_rule`` is a regular expression; an identifier is valid iff
    it is non-empty and the pattern matches it in full. The rule is purely
    syntactic and deterministic, so the same raw identifier always gets
    the same verdict.
    """

    name: str
    id_space: str
    validity_rule: str = r"\S+"

    def __post_init__(self):
        if not self.name:
            raise ValidationFailure("tracking method name must be non-empty")
        try:
            _compiled(self.validity_rule)
        except re.error as exc:
            raise ValidationFailure(
                f"invalid validity_rule for method {self.name!r}: {exc}") from exc

    def is_valid(self, raw_id: str) -> bool:
        return bool(raw_id) and _compiled(self.validity_rule).fullmatch(raw_id) is not None


BUILTIN_COOKIE = TrackingMethod(name="cookie", id_space="cookie", validity_rule=r"\S+")


class MethodRegistry:
    """Registry of tracking methods; ships with the cookie method."""

    def __init__(self):
        self._methods: dict[str, TrackingMethod] = {BUILTIN_COOKIE.name: BUILTIN_COOKIE}

    def register(self, method: TrackingMethod) -> TrackingMethod:
        if method.name in self._methods:
            raise ConflictError(f"tracking method {method.name!r} is already registered")
        self._methods[method.name] = method
        return method

    def get(self, name: str) -> TrackingMethod:
        try:
            return self._methods[name]
        except KeyError:
            raise NotFoundError(f"tracking method {name!r} is not registered") from None

    def __contains__(self, name: str) -> bool:
        return name in self._methods

    def __len__(self) -> int:
        return len(self._methods)

    def names(self) -> list[str]:
        return list(self._methods)

    def all(self) -> list[TrackingMethod]:
        return list(self._methods.values())


_KEY_RE = re.compile(r"[a-z0-9][a-z0-9_-]*")
_SALT_RE = re.compile(r"[0-9a-f]{32}")


@dataclass(slots=True)
class AssignmentSpec:
    """Everything the assignment path needs to know about one experiment.

    The salt is fixed at creation and never derived from the key, so
    bucket placements are independent across experiments and across
    iterations of the same key. ``variant_weights[0]`` is control.
    """

    experiment_key: str
    salt: str
    tracking_method: str
    variant_weights: tuple[int, ...]
    exposure_buckets: int
    state: ExperimentState = ExperimentState.DRAFT
    bucket_count: int = DEFAULT_BUCKET_COUNT

    def __post_init__(self):
        self.variant_weights = tuple(self.variant_weights)
        if not isinstance(self.state, ExperimentState):
            self.state = ExperimentState(self.state)

    def validate(self) -> None:
        if not _KEY_RE.fullmatch(self.experiment_key or ""):
            raise ValidationFailure(
                f"experiment_key must be a lowercase slug, got {self.experiment_key!r}")
        if not _SALT_RE.fullmatch(self.salt or ""):
            raise ValidationFailure("salt must be 32 lowercase hex characters")
        if not self.tracking_method:
            raise ValidationFailure("tracking_method is required")
        if len(self.variant_weights) < 2:
            raise ValidationFailure("an experiment needs at least 2 variants")
        if any(not isinstance(w, int) or w < 0 for w in self.variant_weights):
            raise ValidationFailure("variant weights must be non-negative integers")
        if sum(self.variant_weights) <= 0:
            raise ValidationFailure("variant weights must not all be zero")
        if self.bucket_count < 1:
            raise ValidationFailure("bucket_count must be positive")
        if not 0 <= self.exposure_buckets <= self.bucket_count:
            raise ValidationFailure(
                f"exposure_buckets must be in [0, {self.bucket_count}], "
                f"got {self.exposure_buckets}")
        _, wheel = _weight_wheel(self.variant_weights)
        if wheel > self.bucket_count:
            raise ValidationFailure(
                f"weights reduce to {wheel} slots, more than {self.bucket_count} buckets")

    def to_dict(self) -> dict:
        return {
            "experiment_key": self.experiment_key,
            "salt": self.salt,
            "tracking_method": self.tracking_method,
            "variant_weights": list(self.variant_weights),
            "exposure_buckets": self.exposure_buckets,
            "state": self.state.value,
            "bucket_count": self.bucket_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AssignmentSpec":
        return cls(
            experiment_key=data["experiment_key"],
            salt=data["salt"],
            tracking_method=data["tracking_method"],
            variant_weights=tuple(data["variant_weights"]),
            exposure_buckets=data["exposure_buckets"],
            state=ExperimentState(data["state"]),
            bucket_count=data["bucket_count"],
        )


@dataclass(frozen=True, slots=True)
class AssignmentOutcome:
    """The complete assignment answer; nothing else crosses the API."""

    variant_index: int
    recruited: bool
    reason: str

    def to_dict(self) -> dict:
        return {
            "variant_index": self.variant_index,
            "recruited": self.recruited,
            "reason": self.reason,
        }


OUTCOME_UNKNOWN = AssignmentOutcome(0, False, REASON_UNKNOWN)
OUTCOME_NOT_RUNNING = AssignmentOutcome(0, False, REASON_NOT_RUNNING)
OUTCOME_OUT_OF_EXPOSURE = AssignmentOutcome(0, False, REASON_OUT_OF_EXPOSURE)

_RECRUITED: dict[int, AssignmentOutcome] = {}


def _recruited_outcome(variant: int) -> AssignmentOutcome:
    outcome = _RECRUITED.get(variant)
    if outcome is None:
        outcome = _RECRUITED[variant] = AssignmentOutcome(variant, True, REASON_RECRUITED)
    return outcome


@lru_cache(maxsize=1024)
def _weight_wheel(weights: tuple[int, ...]) -> tuple[tuple[int, ...], int]:
    """Reduce weights by their gcd and return cumulative slot boundaries.

    A bucket maps to a variant via its position on a repeating wheel of
    ``sum(reduced weights)`` slots, so any contiguous exposure prefix
    holds every variant in the configured proportion (exact whenever the
    wheel size divides the prefix length). Crucially the mapping depends
    only on the bucket, so widening the exposure prefix never moves a
    visitor between variants.
    """
    divisor = 0
    for w in weights:
        divisor = gcd(divisor, w)
    reduced = tuple(w // divisor for w in weights)
    total = 0
    bounds = []
    for w in reduced:
        total += w
        bounds.append(total)
    return tuple(bounds), total


def bucket_of(identity: VisitorIdentity, salt: str,
              bucket_count: int = DEFAULT_BUCKET_COUNT) -> int:
    """Hash an identity into a bucket; pure and machine-independent.

    The hash input is ``method_name || 0x00 || raw_id || 0x00 || salt``
    with the salt decoded from hex to its 16 raw bytes, digested to 128
    bits and reduced modulo ``bucket_count``.

    Raises:
        ValidationFailure: for an unknown identity or bucket_count < 1.
    """
    if identity.is_unknown:
        raise ValidationFailure("cannot bucket an unknown identity")
    if bucket_count < 1:
        raise ValidationFailure("bucket_count must be positive")
    message = b"\x00".join((
        identity.method_name.encode(),
        identity.raw_id.encode(),
        bytes.fromhex(salt),
    ))
    digest = blake2b(message, digest_size=16).digest()
    return int.from_bytes(digest, "big") % bucket_count


def assign(spec: AssignmentSpec, identity: VisitorIdentity,
           methods: MethodRegistry) -> AssignmentOutcome:
    """Evaluate one visitor against one experiment.

    Gate order: a non-running experiment answers first (and silently),
    then identity quality, then the exposure ramp. Identifiers that fail
    the tracking method's validity rule, or that live in a different
    namespace than the experiment tracks, are treated exactly like
    unknown identifiers: the visitor sees control and is not recruited,
    because a visitor we cannot re-identify can never be measured.

    The caller is responsible for emitting the matching event: an
    exposure event when recruited, an unknown-identifier event when the
    reason is unknown_identifier, and nothing otherwise.

    Raises:
        NotFoundError: when the spec names an unregistered tracking method.
    """
    if spec.state is not ExperimentState.RUNNING:
        return OUTCOME_NOT_RUNNING
    method = methods.get(spec.tracking_method)
    if (identity.raw_id == "" or identity.method_name != method.name
            or not method.is_valid(identity.raw_id)):
        return OUTCOME_UNKNOWN
    message = b"\x00".join((
        identity.method_name.encode(),
        identity.raw_id.encode(),
        bytes.fromhex(spec.salt),
    ))
    digest = blake2b(message, digest_size=16).digest()
    bucket = int.from_bytes(digest, "big") % spec.bucket_count
    if bucket >= spec.exposure_buckets:
        return OUTCOME_OUT_OF_EXPOSURE
    bounds, wheel = _weight_wheel(spec.variant_weights)
    variant = bisect_right(bounds, bucket % wheel)
    return _recruited_outcome(variant)
