import time
from contextlib import contextmanager
from typing import Dict


class RunMonitor:
    """Monitor stage latencies and counters of one CLI run."""

    def __init__(self):
        self.metrics = {
            'stages': {},
            'counters': {
                'grams_built': 0,
                'paths_simulated': 0,
                'linear_solves': 0,
                'largest_gram': 0,
            },
        }

    @contextmanager
    def stage(self, name: str):
        """Time a block and log its latency under `name`."""
        start = time.perf_counter()
        try:
            yield
        finally:
            self.log_stage(name, (time.perf_counter() - start) * 1000)

    def log_stage(self, name: str, latency_ms: float):
        self.metrics['stages'].setdefault(name, []).append(latency_ms)

    def log_gram(self, size: int):
        self.metrics['counters']['grams_built'] += 1
        counters = self.metrics['counters']
        counters['largest_gram'] = max(counters['largest_gram'], size)

    def log_paths(self, n_paths: int):
        self.metrics['counters']['paths_simulated'] += n_paths

    def log_solves(self, count: int = 1):
        self.metrics['counters']['linear_solves'] += count

    def get_performance_summary(self) -> Dict:
        """Get current performance summary."""
        stages = {
            name: {
                'calls': len(latencies),
                'total_ms': sum(latencies),
                'avg_latency_ms': sum(latencies) / max(len(latencies), 1),
            }
            for name, latencies in self.metrics['stages'].items()
        }
        return {'stages': stages, 'counters': dict(self.metrics['counters'])}
