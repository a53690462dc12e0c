import json

import pytest
from typer.testing import CliRunner

from tclose_bridge.cli import EXIT_ERROR, EXIT_OK, EXIT_VIOLATED, RunConfig, app, run
from tclose_bridge.config import load_schema
from tclose_bridge.dataset import load_dataset
from tclose_bridge.models import VerificationReport

runner = CliRunner()


def invoke(*args):
    return runner.invoke(app, [*args, "--log-level", "ERROR"])


@pytest.fixture
def bands_args(fixtures_dir):
    return ["--input", str(fixtures_dir / "bands.csv"), "--schema", str(fixtures_dir / "bands.schema")]


def test_check_fixture_buckets(bands_args):
    result = invoke("check", *bands_args, "--t", "1.5", "--conf", "bucket")
    assert result.exit_code == EXIT_OK
    payload = json.loads(result.stdout)
    assert payload["satisfied"] is True
    assert payload["achieved_t"] == pytest.approx(1.5)
    assert len(payload["per_class"]) == 3


def test_check_violation_exits_one(bands_args):
    assert invoke("check", *bands_args, "--t", "1.4", "--conf", "bucket").exit_code == EXIT_VIOLATED


def test_check_per_attribute(bands_args, tmp_path):
    out = tmp_path / "report.json"
    result = invoke("check", *bands_args, "--t", "1.5", "--conf", "salary,bucket", "--per-attribute", "--output", str(out))
    assert result.exit_code == EXIT_VIOLATED
    payload = json.loads(out.read_text())
    assert [r["achieved_t"] for r in payload["reports"]] == ["inf", pytest.approx(1.5)]


def test_check_laplace_outputs(bands_args):
    result = invoke(
        "check", *bands_args, "--t", "100", "--conf", "salary", "--laplace-scale", "50", "--grid-resolution", "2001"
    )
    assert result.exit_code == EXIT_OK
    assert json.loads(result.stdout)["mode"] == "stochastic"


def test_check_input_errors(bands_args, fixtures_dir, tmp_path):
    missing = ["--input", str(tmp_path / "nope.csv"), "--schema", str(fixtures_dir / "bands.schema")]
    assert invoke("check", *missing, "--t", "2").exit_code == EXIT_ERROR
    assert invoke("check", *bands_args, "--t", "0.5").exit_code == EXIT_ERROR
    assert invoke("check", *bands_args, "--t", "2", "--conf", "age_band").exit_code == EXIT_ERROR
    assert invoke("check", *bands_args).exit_code == EXIT_ERROR


def test_anonymize_tclose_writes_release(bands_args, tmp_path):
    out = tmp_path / "release.csv"
    result = invoke("anonymize-tclose", *bands_args, "--conf", "salary", "--t", "2", "--output", str(out))
    assert result.exit_code == EXIT_OK
    summary = json.loads(result.stdout)
    assert summary["k"] == 4
    assert summary["certificate"]["achieved_t"] == pytest.approx(1.5)

    sidecar = json.loads(out.with_suffix(".json").read_text())
    assert [b["range"] for b in sidecar["buckets"]] == ["[11.0, 25.0]", "[47.0, 63.0]", "[88.0, 117.0]"]
    assert sidecar["provenance"][0] == {"row": 0, "class_id": 1, "bucket": 1}

    release = load_dataset(out, load_schema(out.with_suffix(".schema")))
    assert release.column("salary")[:4] == ("B1", "B1", "B2", "B3")

    again = invoke(
        "check", "--input", str(out), "--schema", str(out.with_suffix(".schema")), "--t", "2", "--conf", "salary"
    )
    assert again.exit_code == EXIT_OK


def test_anonymize_tclose_is_byte_identical(bands_args, tmp_path):
    for name in ("a.csv", "b.csv"):
        args = ["--conf", "salary", "--t", "2", "--strategy", "sorted-scan", "--output", str(tmp_path / name)]
        assert invoke("anonymize-tclose", *bands_args, *args).exit_code == EXIT_OK
    for suffix in (".csv", ".schema", ".json"):
        first = (tmp_path / "a").with_suffix(suffix).read_bytes()
        assert first == (tmp_path / "b").with_suffix(suffix).read_bytes()


def test_anonymize_tclose_rejects_fractional_t(bands_args, tmp_path):
    result = invoke("anonymize-tclose", *bands_args, "--conf", "salary", "--t", "1.5", "--output", str(tmp_path / "x.csv"))
    assert result.exit_code == EXIT_ERROR
    assert not (tmp_path / "x.csv").exists()


def test_anonymize_dp_is_reproducible(bands_args, tmp_path):
    outputs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        result = invoke(
            "anonymize-dp", *bands_args, "--k", "4", "--epsilon", "0.6931", "--seed", "3", "--conf", "salary",
            "--output", str(out),
        )
        assert result.exit_code == EXIT_OK
        assert json.loads(result.stdout)["bound"]["t"] == pytest.approx(5 / 3, rel=1e-3)
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]


def test_anonymize_dp_needs_numeric_columns(bands_args, tmp_path):
    result = invoke("anonymize-dp", *bands_args, "--k", "4", "--epsilon", "1", "--output", str(tmp_path / "x.csv"))
    assert result.exit_code == EXIT_ERROR


def test_bound_dp_to_t():
    result = invoke("bound", "--dp-to-t", "--n", "12", "--classes", "4,4,4", "--epsilon", "0.6931")
    assert result.exit_code == EXIT_OK
    payload = json.loads(result.stdout)
    assert payload["t"] == pytest.approx(1.6667, rel=1e-4)
    assert payload["binding_class_size"] == 4


def test_bound_t_to_eps():
    result = invoke("bound", "--t-to-eps", "--t", "1.5")
    assert result.exit_code == EXIT_OK
    assert json.loads(result.stdout)["epsilon"] == pytest.approx(0.81093, rel=1e-5)


@pytest.mark.parametrize(
    "args",
    [
        ["--dp-to-t", "--t-to-eps", "--t", "2"],
        ["--dp-to-t", "--n", "12", "--epsilon", "1"],
        ["--dp-to-t", "--n", "12", "--classes", "4,4", "--epsilon", "1"],
        ["--t-to-eps", "--t", "0.5"],
    ],
)
def test_bound_errors(args):
    assert invoke("bound", *args).exit_code == EXIT_ERROR


def fake_reports(passed=True):
    return [
        VerificationReport.judge("dp_to_t", trials=3, worst=1.2, bound=1.5, tolerance=0.02, runtime=0.25),
        VerificationReport.judge("distance_oracle", trials=10, worst=0.0 if passed else 1.0, bound=0.0, tolerance=0.0),
    ]


def test_verify_writes_json_lines(mocker, tmp_path):
    run_sweep = mocker.patch("tclose_bridge.cli.run_sweep", return_value=fake_reports())
    out = tmp_path / "reports.jsonl"

    assert invoke("verify", "--output", str(out), "--grid-resolution", "501").exit_code == EXIT_OK
    sweep = run_sweep.call_args.args[0]
    assert sweep.grid_resolution == 501
    lines = out.read_text().splitlines()
    assert [json.loads(line)["claim"] for line in lines] == ["dp_to_t", "distance_oracle"]
    assert "runtime" not in json.loads(lines[0])

    assert invoke("verify", "--output", str(out), "--append", "--with-timing").exit_code == EXIT_OK
    lines = out.read_text().splitlines()
    assert len(lines) == 4
    assert json.loads(lines[2])["runtime"] == 0.25


def test_verify_failure_exits_one(mocker):
    mocker.patch("tclose_bridge.cli.run_sweep", return_value=fake_reports(passed=False))
    assert invoke("verify").exit_code == EXIT_VIOLATED


def test_verify_small_sweep_is_repeatable(tmp_path):
    sweep = tmp_path / "sweep.json"
    sweep.write_text(
        json.dumps(
            {
                "sizes": [12],
                "epsilons": [0.5],
                "layouts": ["skewed"],
                "grid_resolution": 2001,
                "construction_cases": [[12, 2, 1]],
                "construction_trials": 2,
            }
        )
    )
    first, second = tmp_path / "first.jsonl", tmp_path / "second.jsonl"
    assert invoke("verify", "--sweep", str(sweep), "--output", str(first)).exit_code == EXIT_OK
    assert invoke("verify", "--sweep", str(sweep), "--output", str(second), "--jobs", "2").exit_code == EXIT_OK
    assert first.read_bytes() == second.read_bytes()


def test_bad_settings_file(bands_args, tmp_path):
    settings = tmp_path / "settings.json"
    settings.write_text(json.dumps({"jobs": 0}))
    assert invoke("check", *bands_args, "--t", "2", "--config", str(settings)).exit_code == EXIT_ERROR


def test_run_reports_library_errors(fixtures_dir, capsys):
    config = RunConfig(
        command="anonymize-tclose",
        input=fixtures_dir / "bands.csv",
        schema_file=fixtures_dir / "bands.schema",
        conf="salary,bucket",
        t=2,
        output=fixtures_dir / "never-written.csv",
    )
    assert run(config) == EXIT_ERROR
    assert "exactly one --conf column" in capsys.readouterr().err
    assert not (fixtures_dir / "never-written.csv").exists()


def test_check_bucket_only_fixture(fixtures_dir):
    result = invoke(
        "check",
        "--input",
        str(fixtures_dir / "buckets.csv"),
        "--schema",
        str(fixtures_dir / "buckets.schema"),
        "--t",
        "1.5",
    )
    assert result.exit_code == EXIT_OK
    payload = json.loads(result.stdout)
    assert payload["satisfied"] is True
    assert payload["achieved_t"] == pytest.approx(1.5)


def test_settings_with_wrong_types_exit_two(bands_args, tmp_path):
    settings = tmp_path / "settings.json"
    settings.write_text(json.dumps({"jobs": "2"}))
    assert invoke("check", *bands_args, "--t", "2", "--config", str(settings)).exit_code == EXIT_ERROR


def test_bound_with_huge_epsilon_is_infinite():
    result = invoke("bound", "--dp-to-t", "--n", "12", "--classes", "4,4,4", "--epsilon", "1000")
    assert result.exit_code == EXIT_OK
    payload = json.loads(result.stdout)
    assert payload["t"] == "inf"
    assert payload["binding_class_size"] == 4


def test_verify_uses_settings_tolerance(mocker, tmp_path):
    run_sweep = mocker.patch("tclose_bridge.cli.run_sweep", return_value=fake_reports())
    settings = tmp_path / "settings.json"
    settings.write_text(json.dumps({"tolerance": 0.05}))
    sweep = tmp_path / "sweep.json"
    sweep.write_text(json.dumps({"sizes": [12]}))

    assert invoke("verify", "--sweep", str(sweep), "--config", str(settings)).exit_code == EXIT_OK
    assert run_sweep.call_args.args[0].tolerance == 0.05

    sweep.write_text(json.dumps({"sizes": [12], "tolerance": 0.01}))
    assert invoke("verify", "--sweep", str(sweep), "--config", str(settings)).exit_code == EXIT_OK
    assert run_sweep.call_args.args[0].tolerance == 0.01
