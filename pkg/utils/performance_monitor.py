"""
Performance Monitoring for Regret Lab
Tracks replicate throughput and per-learner step rates
"""
import time
from typing import Any, Dict

from loguru import logger

class PerformanceMonitor:
    """Monitor wall-clock cost of replicates and learner runs"""

    def __init__(self):
        self.metrics = {
            'replicates': {'total': 0, 'seconds': 0.0},
            'learners': {},
            'checks': {'total': 0, 'seconds': 0.0},
        }
        self.start_time = time.perf_counter()

    def track_learner_run(self, learner: str, steps: int, seconds: float):
        """Track one learner pass over a stream"""
        entry = self.metrics['learners'].setdefault(learner, {'runs': 0, 'steps': 0, 'seconds': 0.0})
        entry['runs'] += 1
        entry['steps'] += steps
        entry['seconds'] += seconds

    def track_replicate(self, seconds: float):
        self.metrics['replicates']['total'] += 1
        self.metrics['replicates']['seconds'] += seconds

    def track_checks(self, count: int, seconds: float):
        self.metrics['checks']['total'] += count
        self.metrics['checks']['seconds'] += seconds

    def get_performance_report(self) -> Dict[str, Any]:
        """Generate performance report"""
        runtime = time.perf_counter() - self.start_time
        replicates = self.metrics['replicates']

        return {
            'runtime_seconds': round(runtime, 3),
            'replicates': replicates['total'],
            'mean_replicate_seconds': round(replicates['seconds'] / max(replicates['total'], 1), 4),
            'checks_evaluated': self.metrics['checks']['total'],
            'check_seconds': round(self.metrics['checks']['seconds'], 3),
            'learners': {
                name: {
                    'runs': entry['runs'],
                    'steps_per_second': round(entry['steps'] / entry['seconds'], 1) if entry['seconds'] > 0 else None,
                }
                for name, entry in self.metrics['learners'].items()
            },
        }

    def log_performance_summary(self):
        """Log performance summary"""
        report = self.get_performance_report()

        logger.info(f"Runtime: {report['runtime_seconds']}s over {report['replicates']} replicates "
                    f"({report['mean_replicate_seconds']}s each)")
        for name, entry in report['learners'].items():
            logger.info(f"{name}: {entry['runs']} runs, {entry['steps_per_second']} steps/s")
        if report['checks_evaluated']:
            logger.info(f"Checks: {report['checks_evaluated']} evaluated in {report['check_seconds']}s")
