"""
Text templates for console output and run reports
"""

from typing import Dict, Iterable, Mapping, Sequence


def format_duration(seconds: float) -> str:
    """Format duration in seconds to human readable format"""
    if seconds is None:
        return "Unknown"

    total = int(round(seconds))
    hours = total // 3600
    minutes = (total % 3600) // 60
    secs = total % 60

    if hours > 0:
        return f"{hours}h {minutes}m {secs}s"
    elif minutes > 0:
        return f"{minutes}m {secs}s"
    else:
        return f"{seconds:.1f}s"


class ReportTemplates:
    @staticmethod
    def score_table(means: Mapping[str, object], title: str = '') -> str:
        """Mean recall / precision / F1 per metric"""
        lines = [title] if title else []
        lines.append(f"{'metric':<10} {'recall':>8} {'precision':>10} {'f1':>8}")
        for metric, score in means.items():
            lines.append(f"{metric:<10} {score.recall:>8.4f} {score.precision:>10.4f} {score.f1:>8.4f}")
        return '\n'.join(lines)

    @staticmethod
    def comparison_table(rows: Sequence[object], name_a: str, name_b: str) -> str:
        """Paired t-test rows; significant rows are flagged with '*'"""
        lines = [
            f"{name_a} vs {name_b}",
            f"{'metric':<10} {'measure':<8} {'a':>8} {'b':>8} {'t':>9} {'df':>4} {'p':>8}  sig",
        ]
        for row in rows:
            r = row.result
            flag = '*' if row.significant else ''
            lines.append(
                f"{row.metric:<10} {row.measure:<8} {row.mean_a:>8.4f} {row.mean_b:>8.4f} "
                f"{r.t_statistic:>9.3f} {r.degrees_of_freedom:>4d} {r.p_value:>8.4f}  {flag}"
            )
        return '\n'.join(lines)

    @staticmethod
    def run_summary(kind: str, n_examples: int, timing: Dict[str, float], output_dir: str) -> str:
        total = timing.get('total_seconds')
        return (
            f"Run {kind}: {n_examples} test examples in {format_duration(total)}\n"
            f"Results written to {output_dir}"
        )

    @staticmethod
    def k_sweep_table(results: Iterable[tuple]) -> str:
        lines = [f"{'K':>3} {'ROUGE-1 F1':>11} {'ROUGE-2 F1':>11} {'ROUGE-L F1':>11}"]
        for k, means in results:
            lines.append(f"{k:>3} {means['rouge-1'].f1:>11.4f} {means['rouge-2'].f1:>11.4f} "
                         f"{means['rouge-l'].f1:>11.4f}")
        return '\n'.join(lines)
