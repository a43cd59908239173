import pytest

from src.analysis.report_writer import format_value, read_json, rows_to_csv_text, write_csv, write_json
from src.models.experiment_model import AblationRow, ExperimentReport, MetricRow, SweepRow

GOLDEN = (
    "codec,bits,bits_per_coord,n_seeds,cosine,cosine_se,mse,mse_se,ip_err,ip_err_se,softmax_mass,softmax_mass_se\n"
    "octopus,2,2.60156,64,0.912346,0.0001,0.123457,,,,,\n"
)


def _row():
    return MetricRow("octopus", 2, n_seeds=64, cosine=0.9123456789, mse=0.123456789,
                     cosine_se=1e-4, bits_per_coord=333 / 128)


def test_format_value():
    assert format_value(None) == ""
    assert format_value(True) == "true"
    assert format_value(0.1234567) == "0.123457"
    assert format_value(3) == "3"


def test_csv_golden():
    assert rows_to_csv_text([_row()]) == GOLDEN


def test_csv_with_explicit_columns_and_dicts():
    text = rows_to_csv_text([{"a": 1, "b": 2.0}], ("b", "a"))
    assert text == "b,a\n2,1\n"
    with pytest.raises(ValueError):
        rows_to_csv_text([])


def test_write_csv_creates_parent(tmp_path):
    path = tmp_path / "out" / "table1.csv"
    write_csv(str(path), [_row()])
    assert path.read_text(encoding="utf-8") == GOLDEN


@pytest.mark.parametrize("row", [
    _row(),
    SweepRow(bits=2, delta=1, b_dir=3, b_nrm=1, n_seeds=4, mse=0.01, one_minus_cos=0.02, d_mse_pct=-41.0),
    AblationRow(bits=2, mode="local3x3", b_dir=3, b_nrm=1, n_seeds=5, cosine=0.9, mse=0.01,
                tail95=0.03, ip_err=0.5, d_mse_pct=-7.2),
])
def test_json_round_trip(tmp_path, row):
    report = ExperimentReport("table1", "demo", {"dim": 128}, [row])
    path = tmp_path / "report.json"
    write_json(str(path), report)
    loaded = read_json(str(path))
    assert loaded.id == report.id
    assert loaded.config == {"dim": 128}
    assert loaded.rows == [row]
    assert loaded.columns == type(row).COLUMNS


def test_read_json_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_json(str(tmp_path / "missing.json"))


def test_report_find():
    report = ExperimentReport(rows=[_row(), MetricRow("tq_mse", 2)])
    assert [r.codec for r in report.find(bits=2)] == ["octopus", "tq_mse"]
    assert report.find(codec="tq_mse")[0].bits == 2
