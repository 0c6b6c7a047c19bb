# lut_retouch/core/reports.py

"""Human-readable text reports rendered with Jinja2."""

from typing import Sequence

from jinja2 import Environment

from .engine import BenchReport, EquivalenceReport
from .lutgen import LutBundle, StorageReport

_env = Environment(
    loader=None,  # Templates are strings
    trim_blocks=True,
    lstrip_blocks=True,
    keep_trailing_newline=True,
)
_env.filters["kib"] = lambda n: f"{n / 1024:,.1f}"

STORAGE_TEMPLATE = """\
Bundle storage (C={{ cfg.channels }}, K={{ cfg.groups }}, V={{ levels }}, N={{ cfg.basis_count }}, M={{ cfg.bins }})
  Channel LUTs : {{ "{:>12,}".format(report.channel_lut_bytes) }} B  ({{ report.channel_lut_bytes | kib }} KiB)
  Weight LUTs  : {{ "{:>12,}".format(report.weight_lut_bytes) }} B  ({{ report.weight_lut_bytes | kib }} KiB)
  Basis        : {{ "{:>12,}".format(report.basis_bytes) }} B  ({{ report.basis_bytes | kib }} KiB)
  Total        : {{ "{:>12,}".format(report.total_bytes) }} B
  Unsplit FC   : {{ "{:,}".format(report.full_fc_bytes) }} B
{% for note in report.notes %}
  Note: {{ note }}
{% endfor %}
"""

EQUIVALENCE_TEMPLATE = """\
LUT vs network ({{ report.rows | length }} image(s))
  max weight deviation : {{ "%.6g" | format(report.max_weight_deviation) }} (bound K*s_w/2 = {{ "%.6g" | format(report.weight_bound) }})
  max pixel deviation  : {{ report.max_pixel_deviation }} byte(s) (bound 1)
{% if verbose %}
{% for row in report.rows %}
  image {{ row.index }}: weight {{ "%.6g" | format(row.weight_deviation) }}, pixel {{ row.pixel_deviation }}
{% endfor %}
{% endif %}
  result               : {{ "within bounds" if report.within_bounds else "BOUND VIOLATED" }}
"""

BENCH_TEMPLATE = """\
Benchmark: {{ report.image_count }} image(s) x {{ report.repeats }} repeat(s), {{ report.threads }} thread(s)
  LUT weight stage     : median {{ "%.3f" | format(report.weight_stage_ms.median) }} ms (p10 {{ "%.3f" | format(report.weight_stage_ms.p10) }}, p90 {{ "%.3f" | format(report.weight_stage_ms.p90) }})
  interpolation stage  : median {{ "%.3f" | format(report.interpolation_stage_ms.median) }} ms
{% if report.network_weight_stage_ms %}
  network weight stage : median {{ "%.3f" | format(report.network_weight_stage_ms.median) }} ms
  speedup              : {{ "%.1f" | format(report.weight_speedup) }}x
{% endif %}
"""

TRAINING_TEMPLATE = """\
Trained {{ steps }} step(s) on {{ pairs }} pair(s)
  first loss : {{ "%.6f" | format(first) }}
  final loss : {{ "%.6f" | format(final) }}
"""


def render_storage_report(bundle: LutBundle, report: StorageReport) -> str:
    template = _env.from_string(STORAGE_TEMPLATE)
    return template.render(cfg=bundle.config, levels=bundle.quant.levels, report=report)


def render_equivalence_report(report: EquivalenceReport, verbose: bool = False) -> str:
    return _env.from_string(EQUIVALENCE_TEMPLATE).render(report=report, verbose=verbose)


def render_bench_report(report: BenchReport) -> str:
    return _env.from_string(BENCH_TEMPLATE).render(report=report)


def render_training_summary(history: Sequence[float], pairs: int) -> str:
    return _env.from_string(TRAINING_TEMPLATE).render(
        steps=len(history),
        pairs=pairs,
        first=history[0] if history else float("nan"),
        final=history[-1] if history else float("nan"),
    )
