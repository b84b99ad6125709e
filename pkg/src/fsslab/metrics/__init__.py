from .ssim import SSIM_BACKEND, gaussian_window, ssim
from .evaluate import (
    MetricPlugin,
    MetricReport,
    builtin_metrics,
    emit_report,
    evaluate_pairs,
    gallery,
    load_metric_plugin,
)

__all__ = [
    "ssim", "gaussian_window", "SSIM_BACKEND",
    "MetricPlugin", "MetricReport", "builtin_metrics", "evaluate_pairs",
    "emit_report", "gallery", "load_metric_plugin",
]
