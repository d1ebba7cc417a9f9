import json

import pytest

from codesmooth.cli import (
    EXIT_ADAPTER,
    EXIT_DATA,
    EXIT_NUMERICS,
    EXIT_OK,
    EXIT_USAGE,
    MODEL_ENV_VAR,
    main,
)


@pytest.fixture
def snippet_file(tmp_path):
    path = tmp_path / "snip.c"
    path.write_text("int aa; int bb; aa = bb;")
    return str(path)


@pytest.fixture
def dataset_file(tmp_path):
    rows = [
        {"id": "r1", "code": "int aa; int bb; aa = bb;", "language": "c", "label": 1},
        {"id": "r0", "code": "int cc; cc += 2;", "language": "c", "label": 0},
    ]
    path = tmp_path / "ds.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestExitCodes:
    def test_help_is_ok(self, capsys):
        code, out, _ = run(capsys, "--help")
        assert code == EXIT_OK
        assert "tokenize" in out

    def test_missing_subcommand_is_usage(self, capsys):
        code, _, err = run(capsys)
        assert code == EXIT_USAGE
        assert "usage" in err.lower()

    def test_unknown_flag_is_usage(self, capsys, snippet_file):
        code, _, _ = run(capsys, "tokenize", "--lang", "c", "--bogus", snippet_file)
        assert code == EXIT_USAGE

    def test_missing_file_is_data_error(self, capsys):
        code, _, err = run(capsys, "tokenize", "--lang", "c", "/does/not/exist.c")
        assert code == EXIT_DATA
        assert "codesmooth: error:" in err

    def test_lex_error_is_data_error(self, capsys, tmp_path):
        path = tmp_path / "bad.c"
        path.write_text('char *s = "unterminated;')
        code, _, err = run(capsys, "tokenize", "--lang", "c", str(path))
        assert code == EXIT_DATA
        assert "offset" in err

    def test_malformed_dataset_is_data_error(self, capsys, tmp_path):
        path = tmp_path / "ds.jsonl"
        path.write_text("{nope\n")
        code, _, err = run(
            capsys, "predict", "--model", "builtin:constant", str(path)
        )
        assert code == EXIT_DATA
        assert "ds.jsonl:1" in err

    def test_adapter_failure_is_adapter_error(self, capsys, dataset_file):
        code, _, err = run(
            capsys,
            "predict", "--model", "subprocess:false", "--n", "1", dataset_file,
        )
        assert code == EXIT_ADAPTER

    def test_bad_quantile_input_is_numerics_error(self, capsys):
        code, _, err = run(
            capsys, "oracle", "quantile", "--p", "1.5", "--a", "2", "--b", "2"
        )
        assert code == EXIT_NUMERICS

    def test_missing_model_is_usage_error(self, capsys, dataset_file, monkeypatch):
        monkeypatch.delenv(MODEL_ENV_VAR, raising=False)
        code, _, err = run(capsys, "predict", dataset_file)
        assert code == EXIT_USAGE
        assert MODEL_ENV_VAR in err

    def test_model_from_environment(self, capsys, dataset_file, monkeypatch):
        monkeypatch.setenv(MODEL_ENV_VAR, "builtin:constant:label=1")
        code, out, _ = run(capsys, "predict", "--n", "3", dataset_file)
        assert code == EXIT_OK
        assert json.loads(out.splitlines()[0])["predicted"] == 1


class TestTokenize:
    def test_token_lines(self, capsys, snippet_file):
        code, out, _ = run(capsys, "tokenize", "--lang", "c", snippet_file)
        assert code == EXIT_OK
        lines = [json.loads(line) for line in out.splitlines()]
        assert lines[0] == {"text": "int", "kind": "keyword", "start": 0, "end": 3}
        joined = "".join(line["text"] for line in lines)
        assert joined == "int aa; int bb; aa = bb;"

    def test_table(self, capsys, snippet_file):
        code, out, _ = run(capsys, "tokenize", "--lang", "c", "--table", snippet_file)
        assert code == EXIT_OK
        table = json.loads(out)
        assert table["h"] == 2
        assert [e["name"] for e in table["identifiers"]] == ["aa", "bb"]
        assert all(len(e["occurrences"]) == 2 for e in table["identifiers"])

    def test_stdin_dash(self, capsys, monkeypatch, tmp_path):
        import io
        import sys

        monkeypatch.setattr(sys, "stdin", io.StringIO("int x;"))
        code, out, _ = run(capsys, "tokenize", "--lang", "c", "--table", "-")
        assert code == EXIT_OK
        assert json.loads(out)["h"] == 1


class TestPerturb:
    def test_mask_lines(self, capsys, snippet_file):
        code, out, _ = run(capsys, "perturb", "--lang", "c", "--n", "3", snippet_file)
        assert code == EXIT_OK
        lines = [json.loads(line) for line in out.splitlines()]
        assert [line["index"] for line in lines] == [0, 1, 2]
        assert all(line["code"] == "int vmask0; int vmask1; vmask0 = vmask1;" for line in lines)
        assert all(line["perturbed"] == [0, 1] for line in lines)

    def test_edit_mode_varies(self, capsys, snippet_file):
        code, out, _ = run(
            capsys, "perturb", "--lang", "c", "--n", "5", "--mode", "edit", snippet_file
        )
        assert code == EXIT_OK
        codes = {json.loads(line)["code"] for line in out.splitlines()}
        assert len(codes) > 1

    def test_ops_flag_validation(self, capsys, snippet_file):
        code, _, _ = run(
            capsys, "perturb", "--lang", "c", "--ops", "insert,bogus", snippet_file
        )
        assert code == EXIT_USAGE

    def test_ops_flag_accepted(self, capsys, snippet_file):
        code, _, _ = run(
            capsys,
            "perturb", "--lang", "c", "--mode", "edit", "--ops", "insert,replace",
            "--n", "2", snippet_file,
        )
        assert code == EXIT_OK


class TestPredict:
    def test_votes_in_dataset_order(self, capsys, dataset_file):
        code, out, _ = run(
            capsys, "predict", "--model", "builtin:constant:label=1", "--n", "5", dataset_file
        )
        assert code == EXIT_OK
        lines = [json.loads(line) for line in out.splitlines()]
        assert [line["id"] for line in lines] == ["r1", "r0"]
        assert lines[0]["votes"] == {"1": 5}
        assert lines[0]["predicted"] == 1


class TestCertify:
    def test_writes_rows_and_summary(self, capsys, dataset_file, tmp_path):
        out_path = tmp_path / "certs.jsonl"
        code, out, err = run(
            capsys,
            "certify", "--model", "builtin:constant:label=1", "--n", "20",
            "--out", str(out_path), dataset_file,
        )
        assert code == EXIT_OK
        rows = [json.loads(line) for line in out_path.read_text().splitlines()]
        assert [row["id"] for row in rows] == ["r0", "r1"]
        assert rows[0]["radius"] == -1
        assert rows[1]["radius"] >= 0
        assert "certified 2 records" in err

    def test_edit_mode_forced_back_to_mask(self, capsys, dataset_file, tmp_path):
        edit_path = tmp_path / "edit.jsonl"
        mask_path = tmp_path / "mask.jsonl"
        code, _, err = run(
            capsys,
            "certify", "--model", "builtin:constant:label=1", "--n", "10",
            "--mode", "edit", "--out", str(edit_path), dataset_file,
        )
        assert code == EXIT_OK
        assert "mask" in err
        run(
            capsys,
            "certify", "--model", "builtin:constant:label=1", "--n", "10",
            "--out", str(mask_path), dataset_file,
        )
        assert edit_path.read_bytes() == mask_path.read_bytes()

    def test_edit_mode_with_unsound_flag(self, capsys, dataset_file, tmp_path):
        out_path = tmp_path / "certs.jsonl"
        code, _, err = run(
            capsys,
            "certify", "--model", "builtin:constant:label=1", "--n", "10",
            "--mode", "edit", "--unsound-edit-certificates",
            "--out", str(out_path), dataset_file,
        )
        assert code == EXIT_OK
        assert out_path.exists()


class TestEvaluate:
    def test_report_json(self, capsys, dataset_file, tmp_path):
        report_path = tmp_path / "report.json"
        code, _, err = run(
            capsys,
            "evaluate", "--model", "builtin:constant:label=1", "--n", "10",
            "--report", str(report_path), dataset_file,
        )
        assert code == EXIT_OK
        report = json.loads(report_path.read_text())
        assert report["acc"] == 0.5
        assert report["asr"] is None
        assert "acc" in err

    def test_precomputed_certs_skip_model(self, capsys, dataset_file, tmp_path, monkeypatch):
        monkeypatch.delenv(MODEL_ENV_VAR, raising=False)
        certs_path = tmp_path / "certs.jsonl"
        run(
            capsys,
            "certify", "--model", "builtin:constant:label=1", "--n", "10",
            "--out", str(certs_path), dataset_file,
        )
        report_path = tmp_path / "report.json"
        code, _, _ = run(
            capsys,
            "evaluate", "--certs", str(certs_path),
            "--report", str(report_path), dataset_file,
        )
        assert code == EXIT_OK
        assert json.loads(report_path.read_text())["acc"] == 0.5

    def test_adv_requires_model_even_with_certs(self, capsys, dataset_file, tmp_path, monkeypatch):
        monkeypatch.delenv(MODEL_ENV_VAR, raising=False)
        certs_path = tmp_path / "certs.jsonl"
        run(
            capsys,
            "certify", "--model", "builtin:constant:label=1", "--n", "10",
            "--out", str(certs_path), dataset_file,
        )
        adv_path = tmp_path / "adv.jsonl"
        adv_path.write_text(json.dumps(
            {"id": "a0", "orig_id": "r1", "code": "int zz;", "label": 1}
        ) + "\n")
        code, _, _ = run(
            capsys,
            "evaluate", "--certs", str(certs_path), "--adv", str(adv_path),
            "--report", str(tmp_path / "r.json"), dataset_file,
        )
        assert code == EXIT_USAGE

    def test_csv_report(self, capsys, dataset_file, tmp_path):
        report_path = tmp_path / "report.csv"
        code, _, _ = run(
            capsys,
            "evaluate", "--model", "builtin:constant:label=1", "--n", "10",
            "--report", str(report_path), dataset_file,
        )
        assert code == EXIT_OK
        lines = report_path.read_text().splitlines()
        assert lines[0] == "id,predicted,truth,radius,h,score"
        assert len(lines) == 3


class TestOracle:
    def test_beta_enumerates_small_h(self, capsys):
        code, out, _ = run(capsys, "oracle", "beta", "--h", "6", "--k", "2", "--r", "1")
        assert code == EXIT_OK
        report = json.loads(out)
        assert report["quantity"] == "beta_factor"
        assert report["trials_or_enumerated"] == 15
        assert report["abs_error"] < 1e-12
        assert list(report) == sorted(report)

    def test_beta_mc_for_large_h(self, capsys):
        code, out, _ = run(
            capsys,
            "oracle", "beta", "--h", "40", "--k", "3", "--r", "2",
            "--trials", "20000", "--seed", "1",
        )
        assert code == EXIT_OK
        report = json.loads(out)
        assert report["trials_or_enumerated"] == 20000
        assert report["abs_error"] < 0.02

    def test_quantile(self, capsys):
        code, out, _ = run(
            capsys, "oracle", "quantile", "--p", "0.5", "--a", "2", "--b", "2"
        )
        assert code == EXIT_OK
        report = json.loads(out)
        assert report["analytic_value"] == pytest.approx(0.5, abs=1e-9)
        assert report["abs_error"] < 1e-7

    def test_coverage(self, capsys):
        code, out, _ = run(
            capsys,
            "oracle", "coverage", "--p-true", "0.9", "--n", "100",
            "--trials", "2000", "--seed", "1",
        )
        assert code == EXIT_OK
        report = json.loads(out)
        assert report["oracle_value"] >= 0.99
        assert report["analytic_value"] == pytest.approx(0.998)

    def test_soundness(self, capsys):
        code, out, err = run(capsys, "oracle", "soundness", "--h", "6")
        assert code == EXIT_OK
        report = json.loads(out)
        assert report["quantity"] == "soundness_violations"
        assert report["oracle_value"] == 0.0
        assert "claimed radius" in err

    def test_soundness_negative_control(self, capsys):
        code, out, _ = run(
            capsys, "oracle", "soundness", "--h", "8", "--negative-control"
        )
        assert code == EXIT_OK
        report = json.loads(out)
        assert report["oracle_value"] >= 1.0
