"""Desk-scale online controlled experiment platform.

Deterministic assignment, two independent metric pipelines with
divergence monitoring, a frequentist decision engine calibrated by a
pool of AA experiments, an auditable registry with enforced
pre-registration, safeguard-gated reporting, and a seeded traffic
simulator that doubles as the ground-truth test harness.
"""

from .assignment import (AssignmentSpec, ExperimentState, MethodRegistry,
                         TrackingMethod, VisitorIdentity, assign, bucket_of)
from .config import PlatformConfig, load_config
from .guardrails import GuardrailStatus, Report, compose_report, guardrail_status
from .metrics import MetricCatalog, MetricDefinition
from .quality import (AaPoolResult, CoverageResult, DiscrepancyReport,
                      aa_pool_run, compare_pipelines, coverage_run,
                      make_controlled_scenario, run_controlled_input_check)
from .registry import AuditRegistry, ExperimentRecord, PreRegistration
from .runtime import Platform
from .simulator import (EffectModel, GroundTruth, LossModel, Scenario,
                        TrafficProfile, load_scenario, run_scenario,
                        save_scenario)
from .stats import (SrmResult, TestResult, srm_check, two_proportion_ztest,
                    welch_ttest)

__version__ = "0.1.0"

__all__ = [
    "AaPoolResult", "AssignmentSpec", "AuditRegistry", "CoverageResult",
    "DiscrepancyReport", "EffectModel", "ExperimentRecord", "ExperimentState",
    "GroundTruth", "GuardrailStatus", "LossModel", "MethodRegistry",
    "MetricCatalog", "MetricDefinition", "Platform", "PlatformConfig",
    "PreRegistration", "Report", "Scenario", "SrmResult", "TestResult",
    "TrackingMethod", "TrafficProfile", "VisitorIdentity", "aa_pool_run",
    "assign", "bucket_of", "compare_pipelines", "compose_report",
    "coverage_run", "guardrail_status", "load_config", "load_scenario",
    "make_controlled_scenario", "run_controlled_input_check",
    "run_scenario", "save_scenario", "srm_check", "two_proportion_ztest",
    "welch_ttest",
]
