#!/usr/bin/env python3
"""
EWGSL: Entmax solver benchmark
Times bisection against the sort-based solver over growing row lengths
"""

import statistics
import time
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np

from .constants import DEFAULT_ALPHA
from .entmax import entmax, entmax_sorted_oracle

DEFAULT_DIMS = (8, 64, 512, 4096)


class SolverBenchmarkRunner:
    """Entmax solver benchmark runner"""

    def __init__(self, rounds: int = 10, alpha: float = DEFAULT_ALPHA, seed: int = 0):
        self.rounds = rounds
        self.alpha = alpha
        self.rng = np.random.default_rng(seed)
        self.results: List[Dict[str, Any]] = []

    def make_rows(self, dim: int, count: int) -> List[np.ndarray]:
        return [self.rng.uniform(-5.0, 5.0, size=dim) for _ in range(count)]

    def measure_function(self, func: Callable[..., Any], *args: Any) -> float:
        start_time = time.perf_counter()
        func(*args)
        return time.perf_counter() - start_time

    def run_benchmark(self, func: Callable[[np.ndarray], Any], rows: Sequence[np.ndarray]) -> Dict[str, float]:
        """Per-row time statistics over ``self.rounds`` passes"""
        times = []
        for _ in range(self.rounds):
            elapsed = self.measure_function(lambda: [func(row) for row in rows])
            times.append(elapsed / len(rows))
        return {
            "mean": statistics.mean(times),
            "median": statistics.median(times),
            "min": min(times),
            "max": max(times),
            "stdev": statistics.stdev(times) if len(times) > 1 else 0.0,
        }

    def compare_solvers(self, dim: int, count: int = 20) -> Dict[str, Any]:
        rows = self.make_rows(dim, count)
        bisection = self.run_benchmark(lambda r: entmax(r, self.alpha), rows)
        sorted_stats = self.run_benchmark(lambda r: entmax_sorted_oracle(r, self.alpha), rows)
        gap = max(
            float(np.abs(entmax(r, self.alpha).p - entmax_sorted_oracle(r, self.alpha).p).max())
            for r in rows
        )
        record = {
            "dim": dim,
            "alpha": self.alpha,
            "bisection_mean_s": bisection["mean"],
            "bisection_stdev_s": bisection["stdev"],
            "sorted_mean_s": sorted_stats["mean"],
            "sorted_stdev_s": sorted_stats["stdev"],
            "ratio": bisection["mean"] / sorted_stats["mean"] if sorted_stats["mean"] else 0.0,
            "max_abs_gap": gap,
        }
        self.results.append(record)
        return record

    def run_comprehensive_benchmark(self, dims: Sequence[int] = DEFAULT_DIMS) -> List[Dict[str, Any]]:
        return [self.compare_solvers(dim) for dim in dims]

    def print_results(self) -> None:
        print(f"{'dim':>6} {'bisection (us)':>15} {'sorted (us)':>12} {'ratio':>7} {'max gap':>10}")
        for r in self.results:
            print(
                f"{r['dim']:>6} {r['bisection_mean_s'] * 1e6:>15.1f} "
                f"{r['sorted_mean_s'] * 1e6:>12.1f} {r['ratio']:>7.2f} {r['max_abs_gap']:>10.2e}"
            )


def benchmark_solvers(
    dims: Sequence[int] = DEFAULT_DIMS,
    rounds: int = 5,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 0,
) -> List[Dict[str, Any]]:
    """Timing table, one record per row length"""
    return SolverBenchmarkRunner(rounds=rounds, alpha=alpha, seed=seed).run_comprehensive_benchmark(dims)


def main(argv: Optional[Sequence[str]] = None) -> None:
    """Main execution function"""
    import argparse

    parser = argparse.ArgumentParser(description="EWGSL entmax solver benchmark")
    parser.add_argument("--rounds", "-r", type=int, default=10, help="Timing rounds per solver")
    parser.add_argument("--dim", "-d", type=int, help="Benchmark only this row length")
    parser.add_argument("--alpha", "-a", type=float, default=DEFAULT_ALPHA, choices=(1.5, 2.0))
    parser.add_argument("--quick", "-q", action="store_true", help="Quick test (3 rounds)")
    args = parser.parse_args(argv)

    if args.quick:
        args.rounds = 3

    runner = SolverBenchmarkRunner(rounds=args.rounds, alpha=args.alpha)
    if args.dim:
        runner.compare_solvers(args.dim)
    else:
        runner.run_comprehensive_benchmark()
    runner.print_results()


if __name__ == "__main__":
    main()
