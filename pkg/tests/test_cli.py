import csv
import json

import pytest

from narrowops.cli import (
    ManifestError,
    default_manifest,
    main,
    run,
    verify_record,
)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_burkholder_table(tmp_path):
    assert main(["burkholder", "--out", str(tmp_path)]) == 0
    run_dir = next(tmp_path.glob("burkholder-table-*"))
    rows = read_csv(run_dir / "burkholder.csv")
    assert rows[0] == ["p", "beta", "method"]
    table = {float(r[0]): float(r[1]) for r in rows[1:]}
    assert table[1.5] == 2.0 and table[2.0] == 1.0 and table[3.0] == 2.0 and table[4.0] == 3.0
    assert all(r[2] == "exact" for r in rows[1:])


def test_rerun_is_byte_identical(tmp_path):
    m = default_manifest("defect")
    d1 = run("defect", m, tmp_path / "a")
    d2 = run("defect", m, tmp_path / "b")
    assert (d1 / "defect.csv").read_bytes() == (d2 / "defect.csv").read_bytes()
    assert (d1 / "summary.json").read_bytes() == (d2 / "summary.json").read_bytes()


def test_seed_override_changes_directory(tmp_path):
    m = default_manifest("defect")
    assert m.with_seed(m.seed + 1).digest() != m.digest()


def test_json_table_format(tmp_path):
    m = default_manifest("burkholder")
    d = run("burkholder", m, tmp_path, table_format="json")
    rows = json.loads((d / "burkholder.json").read_text())
    assert rows[0]["p"] == 1.5 and rows[0]["beta"] == 2.0


def test_validation_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"name": "x", "experiment": "defect", "tolerances": {"eps": -1}}))
    assert main(["defect", "--manifest", str(bad), "--out", str(tmp_path)]) == 2


def test_experiment_mismatch_rejected(tmp_path):
    m = default_manifest("defect")
    with pytest.raises(ManifestError):
        run("tree", m, tmp_path)


def test_infeasible_exit_code(tmp_path, capsys):
    manifest = tmp_path / "infeasible.json"
    manifest.write_text(json.dumps({
        "name": "identity-tree",
        "experiment": "tree",
        "seed": 0,
        "depths": {"space": 3, "levels": 2},
        "p_values": [1.0],
        "tolerances": {"eps": 0.5},
        "params": {"operator": {"kind": "identity_like"}},
        "version": 1,
    }))
    code = main(["tree", "--manifest", str(manifest), "--out", str(tmp_path)])
    assert code == 3
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "infeasible"
    assert err["node"] == "."
    assert err["achieved"] == pytest.approx(1.0)


def test_verify_passes_then_catches_tampering(tmp_path):
    m = default_manifest("defect")
    d = run("defect", m, tmp_path)
    ok, failures = verify_record(d)
    assert ok and not failures

    record = json.loads((d / "record.json").read_text())
    for cert in record["certificates"]:
        if cert["kind"] == "image_norm":
            cert["claimed"] = cert["claimed"] + 0.125
    (d / "record.json").write_text(json.dumps(record))
    ok, failures = verify_record(d)
    assert not ok
    assert any("image_norm" in f for f in failures)


def test_verify_detects_tampered_artifact(tmp_path):
    m = default_manifest("defect")
    d = run("defect", m, tmp_path)
    sign_path = d / "artifacts" / "sign.json"
    data = json.loads(sign_path.read_text())
    data["values"][0] = 0.5
    sign_path.write_text(json.dumps(data))
    ok, failures = verify_record(d)
    assert not ok
    assert any("sign_valid" in f for f in failures)


def test_verify_cli_exit_codes(tmp_path):
    m = default_manifest("defect")
    d = run("defect", m, tmp_path)
    assert main(["verify", str(d)]) == 0
    record = json.loads((d / "record.json").read_text())
    record["record_version"] = 99
    (d / "record.json").write_text(json.dumps(record))
    assert main(["verify", str(d)]) == 2


def test_thm43_bundled_manifest(tmp_path):
    assert main(["thm43", "--out", str(tmp_path)]) == 0
    run_dir = next(tmp_path.glob("thm43-eight-atoms-*"))
    rows = read_csv(run_dir / "pipeline.csv")
    header, row = rows[0], rows[1]
    data = dict(zip(header, row))
    assert data["ok"] == "True"
    assert float(data["measured"]) <= float(data["eps"]) + float(data["slack"]) + 1e-9
    ok, failures = verify_record(run_dir)
    assert ok, failures


def test_counterexample_bundled_manifest(tmp_path):
    assert main(["counterexample", "--out", str(tmp_path)]) == 0
    run_dir = next(tmp_path.glob("counterexample-product-*"))
    rows = {r[0]: r[1:] for r in read_csv(run_dir / "counterexample.csv")[1:]}
    assert float(rows["full_sigma_defect"][0]) <= 1e-12
    assert float(rows["s_partition_defect"][0]) == 1.0
    assert float(rows["operator_norm"][0]) == 1.0
    ok, failures = verify_record(run_dir)
    assert ok, failures


def test_every_table_row_carries_method_tag(tmp_path):
    for cmd in ("burkholder", "defect", "tree", "signbuild"):
        m = default_manifest(cmd)
        d = run(cmd, m, tmp_path / cmd)
        for csv_path in d.glob("*.csv"):
            rows = read_csv(csv_path)
            assert "method" in rows[0], csv_path
