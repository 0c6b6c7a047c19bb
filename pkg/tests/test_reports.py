from lut_retouch.core.engine import BenchReport, EquivalenceReport, EquivalenceRow, StageStats
from lut_retouch.core.lutgen import bundle_storage
from lut_retouch.core.reports import (
    render_bench_report,
    render_equivalence_report,
    render_storage_report,
    render_training_summary,
)


def test_storage_report_lists_every_section(identity_bundle):
    text = render_storage_report(identity_bundle, bundle_storage(identity_bundle))
    assert "C=10, K=5, V=64, N=20, M=17" in text
    assert "409,600 B" in text
    assert "327,680 B" in text
    assert "Note:" in text


def test_equivalence_report_rows_only_when_verbose():
    report = EquivalenceReport(
        max_weight_deviation=0.001,
        weight_bound=0.01,
        max_pixel_deviation=0,
        rows=[EquivalenceRow(0, 0.001, 0), EquivalenceRow(1, 0.0, 0)],
    )
    short = render_equivalence_report(report)
    assert "2 image(s)" in short and "within bounds" in short
    assert "image 1:" not in short
    assert "image 1:" in render_equivalence_report(report, verbose=True)

    report.max_pixel_deviation = 3
    assert "BOUND VIOLATED" in render_equivalence_report(report)


def test_bench_report_shows_speedup_only_when_compared():
    lut = StageStats(median=0.5, p10=0.4, p90=0.6)
    report = BenchReport(
        weight_stage_ms=lut, interpolation_stage_ms=lut, image_count=2, repeats=3, threads=1
    )
    assert "speedup" not in render_bench_report(report)
    report.network_weight_stage_ms = StageStats(median=10.0, p10=9.0, p90=11.0)
    assert "20.0x" in render_bench_report(report)


def test_training_summary():
    text = render_training_summary([0.5, 0.25, 0.125], pairs=4)
    assert "Trained 3 step(s) on 4 pair(s)" in text
    assert "0.500000" in text and "0.125000" in text
    assert "nan" in render_training_summary([], pairs=0)
