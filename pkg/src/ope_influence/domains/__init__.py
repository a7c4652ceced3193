"""Synthetic evaluation domains used by the reproduction commands."""

from .navigation import (
    NavigationConfig,
    generate_navigation,
    navigation_analysis_config,
    navigation_policy,
    region_of,
)
from .tumor import (
    TumorConfig,
    generate_tumor,
    inject_reward_outliers,
    tumor_analysis_config,
    tumor_case,
    tumor_case_names,
    tumor_policy,
)

__all__ = [
    "NavigationConfig",
    "TumorConfig",
    "generate_navigation",
    "generate_tumor",
    "inject_reward_outliers",
    "navigation_analysis_config",
    "navigation_policy",
    "region_of",
    "tumor_analysis_config",
    "tumor_case",
    "tumor_case_names",
    "tumor_policy",
]
