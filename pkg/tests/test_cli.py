"""Command-line surface: subcommands, exit codes, output formats, composition."""

import json
import random

import pytest

from ehrsum import testkit
from ehrsum.cli import main
from ehrsum.mutations import apply_mutation
from ehrsum.normalizer import ClinicalContextPackage
from ehrsum.summarizer import SummaryDocument


@pytest.fixture()
def fixtures_dir(tmp_path):
    out = tmp_path / "fixtures"
    assert main(["gen-fixtures", "--seed", "1", "--out", str(out)]) == 0
    return out


def patient_id(fixtures_dir):
    (pdir,) = list(fixtures_dir.iterdir())
    return pdir.name


class TestGenFixtures:
    def test_writes_all_types_and_manifest(self, fixtures_dir):
        (pdir,) = list(fixtures_dir.iterdir())
        names = {p.name for p in pdir.iterdir()}
        assert "Patient.json" in names
        assert "manifest.json" in names
        assert len(names) == 18  # 17 resource types + manifest

    def test_byte_identical_across_runs(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        main(["gen-fixtures", "--seed", "7", "--out", str(a)])
        main(["gen-fixtures", "--seed", "7", "--out", str(b)])
        for f1 in sorted(a.rglob("*.json")):
            f2 = b / f1.relative_to(a)
            assert f1.read_bytes() == f2.read_bytes()

    def test_unknown_profile_is_usage_error(self, tmp_path, capsys):
        assert main(["gen-fixtures", "--profile", "nope", "--out", str(tmp_path)]) == 1
        assert "error" in capsys.readouterr().err


class TestSummarize:
    def test_text_output_contains_disclaimer(self, fixtures_dir, capsys):
        rc = main(
            ["summarize", "--fixtures", str(fixtures_dir), "--patient", patient_id(fixtures_dir)]
        )
        out = capsys.readouterr().out
        assert rc == 0
        assert "Patient:" in out
        assert "not medical advice" in out

    def test_json_output_parses_as_summary_document(self, fixtures_dir, tmp_path):
        out = tmp_path / "doc.json"
        rc = main(
            [
                "summarize",
                "--fixtures",
                str(fixtures_dir),
                "--patient",
                patient_id(fixtures_dir),
                "--format",
                "json",
                "--out",
                str(out),
            ]
        )
        assert rc == 0
        doc = SummaryDocument.from_json(out.read_text())
        assert doc.sections

    def test_markdown_output_has_headings(self, fixtures_dir, capsys):
        main(
            [
                "summarize",
                "--fixtures",
                str(fixtures_dir),
                "--patient",
                patient_id(fixtures_dir),
                "--format",
                "markdown",
            ]
        )
        assert "## " in capsys.readouterr().out

    def test_unknown_patient_exits_2(self, fixtures_dir, capsys):
        rc = main(["summarize", "--fixtures", str(fixtures_dir), "--patient", "ghost"])
        assert rc == 2
        assert "error" in capsys.readouterr().err

    def test_missing_patient_flag_is_usage_error(self, fixtures_dir, capsys):
        assert main(["summarize", "--fixtures", str(fixtures_dir)]) == 1

    def test_hosted_without_url_is_usage_error(self, fixtures_dir, capsys):
        rc = main(
            [
                "summarize",
                "--fixtures",
                str(fixtures_dir),
                "--patient",
                patient_id(fixtures_dir),
                "--backend",
                "hosted",
            ]
        )
        assert rc == 1

    def test_golden_text_stable_across_runs(self, fixtures_dir, tmp_path):
        args = [
            "summarize",
            "--fixtures",
            str(fixtures_dir),
            "--patient",
            patient_id(fixtures_dir),
        ]
        out1, out2 = tmp_path / "1.txt", tmp_path / "2.txt"
        main(args + ["--out", str(out1)])
        main(args + ["--out", str(out2)])
        assert out1.read_bytes() == out2.read_bytes()


class TestEvaluate:
    def _summarize(self, fixtures_dir, tmp_path):
        ccp_path = tmp_path / "ccp.json"
        doc_path = tmp_path / "doc.json"
        rc = main(
            [
                "summarize",
                "--fixtures",
                str(fixtures_dir),
                "--patient",
                patient_id(fixtures_dir),
                "--format",
                "json",
                "--out",
                str(doc_path),
                "--emit-ccp",
                str(ccp_path),
            ]
        )
        assert rc == 0
        return ccp_path, doc_path

    def test_summarize_then_evaluate_passes(self, fixtures_dir, tmp_path, capsys):
        ccp_path, doc_path = self._summarize(fixtures_dir, tmp_path)
        rc = main(["evaluate", "--ccp", str(ccp_path), "--summary", str(doc_path)])
        report = json.loads(capsys.readouterr().out)
        assert rc == 0
        assert report["overall_pass"] is True

    def test_corrupted_summary_exits_3(self, fixtures_dir, tmp_path, capsys):
        ccp_path, doc_path = self._summarize(fixtures_dir, tmp_path)
        ccp = ClinicalContextPackage.from_json(ccp_path.read_text())
        doc = SummaryDocument.from_json(doc_path.read_text())
        mutated, _ = apply_mutation(doc, ccp, "safety_deletion", random.Random(0))
        doc_path.write_text(mutated.to_json())
        rc = main(["evaluate", "--ccp", str(ccp_path), "--summary", str(doc_path)])
        report = json.loads(capsys.readouterr().out)
        assert rc == 3
        assert report["overall_pass"] is False

    def test_fingerprint_mismatch_exits_1(self, fixtures_dir, tmp_path, capsys):
        ccp_path, doc_path = self._summarize(fixtures_dir, tmp_path)
        d = json.loads(doc_path.read_text())
        d["ccp_fingerprint"] = "deadbeef"
        doc_path.write_text(json.dumps(d))
        rc = main(["evaluate", "--ccp", str(ccp_path), "--summary", str(doc_path)])
        assert rc == 1
        assert "fingerprint" in capsys.readouterr().err

    def test_unreadable_input_exits_1(self, tmp_path, capsys):
        rc = main(["evaluate", "--ccp", str(tmp_path / "no.json"), "--summary", str(tmp_path / "no2.json")])
        assert rc == 1


class TestStress:
    def test_stress_prints_table_and_writes_report(self, tmp_path, capsys):
        report_path = tmp_path / "stress.json"
        rc = main(["stress", "--seed", "0", "--report", str(report_path)])
        out = capsys.readouterr().out
        assert rc == 0
        assert out.count("PASS") == 4
        assert json.loads(report_path.read_text())["all_passed"] is True


def test_no_subcommand_is_usage_error(capsys):
    assert main([]) == 1
