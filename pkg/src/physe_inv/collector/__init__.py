# Collector package
from .collector import RunReportCollector, write_metrics

__all__ = ['RunReportCollector', 'write_metrics']
