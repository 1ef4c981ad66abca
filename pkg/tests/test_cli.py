import json

import numpy as np
import pytest

from sketchcbr import io
from sketchcbr.cli import main
from sketchcbr.synthetic import make_dataset, write_dataset

QUICK_INI = """[pipeline]
max_iters = 3
zoo = M10, M12
max_features = 3
sharpen_levels = 2
oracle_folds = 9
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, small_manifest):
    d = tmp_path_factory.mktemp("cli")
    (d / "quick.ini").write_text(QUICK_INI)
    assert main(["build-cases", str(small_manifest), str(d / "lib"), "--style-id", "demo"]) == 0
    cfg = ["--config", str(d / "quick.ini")]
    assert main(["gen-train", str(d / "lib"), str(d / "samples"), *cfg]) == 0
    assert main(["train", str(d / "samples"), str(d / "models"), *cfg]) == 0
    return d


def last_error(capsys):
    err = capsys.readouterr().err.strip().splitlines()[-1]
    return json.loads(err)


def test_pipeline_artifacts(workspace):
    assert json.loads((workspace / "lib" / "library.json").read_text())["style_id"] == "demo"
    assert sorted(p.name for p in (workspace / "samples").iterdir()) == [f"region_{r}.stsm" for r in range(1, 10)]
    names = {p.name for p in (workspace / "models").iterdir()}
    assert {f"region_{r}_fe.smdl" for r in range(1, 10)} <= names
    assert "selection_report.json" in names


def test_train_is_byte_identical(workspace):
    cfg = ["--config", str(workspace / "quick.ini")]
    assert main(["train", str(workspace / "samples"), str(workspace / "models2"), *cfg]) == 0
    for p in sorted((workspace / "models").iterdir()):
        assert p.read_bytes() == (workspace / "models2" / p.name).read_bytes()


def test_synthesize_writes_png_and_trace(workspace, small_manifest):
    entry = json.loads(small_manifest.read_text())[0]
    root = small_manifest.parent
    out = workspace / "out" / "face.png"
    rc = main(["synthesize", str(workspace / "lib"), str(workspace / "models"), str(root / entry["photo"]),
               str(root / entry["photo_landmarks"]), str(out), "--config", str(workspace / "quick.ini")])
    assert rc == 0
    img = io.read_png(out)
    assert img.shape == (100, 80)
    trace = json.loads(out.with_suffix(".json").read_text())
    assert trace["schema_version"] == 1 and len(trace["regions"]) == 9


def test_synthesize_dimension_mismatch(workspace, small_manifest, tmp_path, capsys):
    entry = json.loads(small_manifest.read_text())[0]
    io.write_png(tmp_path / "small.png", np.zeros((50, 40)))
    rc = main(["synthesize", str(workspace / "lib"), str(workspace / "models"), str(tmp_path / "small.png"),
               str(small_manifest.parent / entry["photo_landmarks"]), str(tmp_path / "o.png")])
    assert rc == 1
    err = last_error(capsys)
    assert err["error"] == "DimensionError" and "small.png" in err["message"]


def test_usage_error_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["train", "--no-such-flag"])
    assert exc.value.code == 2


def test_missing_input_exit_1(tmp_path, capsys):
    assert main(["build-cases", str(tmp_path / "nope.json"), str(tmp_path / "lib")]) == 1
    assert last_error(capsys)["error"] == "IoError"


def test_bad_config_exit_1(tmp_path, capsys):
    (tmp_path / "bad.ini").write_text("[pipeline]\nmax_iters = x\n")
    assert main(["loocv", "m.json", "r.json", "--config", str(tmp_path / "bad.ini")]) == 1
    err = last_error(capsys)
    assert err["error"] == "ConfigError" and "bad.ini:2" in err["message"]


def test_evaluate_report(workspace, capsys):
    report = workspace / "eval.json"
    rc = main(["evaluate", str(workspace / "lib"), str(workspace / "models"), str(report),
               "--config", str(workspace / "quick.ini")])
    assert rc == 0
    r = json.loads(report.read_text())
    assert r["schema_version"] == 1 and r["kind"] == "evaluate" and len(r["rows"]) == 12
    assert (workspace / "eval_sketches" / "face000.png").exists()


def test_loocv_ten_cases(tmp_path):
    m = write_dataset(tmp_path / "data", make_dataset(n=10, seed=8, width=64, height=80))
    (tmp_path / "quick.ini").write_text(QUICK_INI)
    report = tmp_path / "loocv.json"
    assert main(["loocv", str(m), str(report), "--config", str(tmp_path / "quick.ini")]) == 0
    r = json.loads(report.read_text())
    assert r["kind"] == "loocv" and len(r["rows"]) == 10
    for row in r["rows"]:
        assert set(row["regions"]) == {str(k) for k in range(1, 10)}
        for v in row["regions"].values():
            assert 1.0 <= v["single"] <= 2.0 and 1.0 <= v["multi"] <= 2.0
