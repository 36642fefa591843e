import json
import math

import numpy as np
import pytest

from spinpair.cli import atomic_write, main


def run_cli(args):
    return main([str(a) for a in args])


class TestParsing:
    def test_unknown_subcommand_exits_2(self, capsys):
        with pytest.raises(SystemExit) as info:
            run_cli(["frobnicate"])
        assert info.value.code == 2

    def test_no_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as info:
            run_cli([])
        assert info.value.code == 2

    def test_missing_seed_names_flag(self, capsys):
        with pytest.raises(SystemExit) as info:
            run_cli(["simulate", "--pairs", 10, "--out", "x.csv"])
        assert info.value.code == 2
        assert "--seed" in capsys.readouterr().err

    def test_missing_config_file_exits_2(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as info:
            run_cli(["simulate", "--config", tmp_path / "absent.json"])
        assert info.value.code == 2
        assert "not found" in capsys.readouterr().err

    def test_flag_overrides_config_file(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"seed": 1, "pairs": 50, "marks": "2x2"}))
        out = tmp_path / "lb.csv"
        report = tmp_path / "rep.json"
        assert run_cli([
            "simulate", "--config", cfg, "--seed", 42, "--out", out,
            "--report", report,
        ]) == 0
        envelope = json.loads(report.read_text())
        assert envelope["config"]["seed"] == 42
        assert envelope["config"]["pairs"] == 50

    def test_unknown_config_key_exits_2(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"seed": 1, "bogus": True}))
        with pytest.raises(SystemExit) as info:
            run_cli(["simulate", "--config", cfg, "--pairs", 5, "--out", "x"])
        assert info.value.code == 2
        assert "bogus" in capsys.readouterr().err


class TestSimulate:
    def test_logbook_format_and_determinism(self, tmp_path):
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        base = ["simulate", "--backend", "qm", "--pairs", 5000, "--marks", "4x4",
                "--seed", 42]
        assert run_cli(base + ["--out", out1]) == 0
        assert run_cli(base + ["--out", out2, "--workers", 4]) == 0
        text = out1.read_text()
        assert text.splitlines()[0] == "left_mark,right_mark,outcome"
        assert len(text.splitlines()) == 5001
        assert out1.read_bytes() == out2.read_bytes()

    def test_posts_out_roundtrip(self, tmp_path):
        posts = tmp_path / "posts.json"
        assert run_cli([
            "simulate", "--backend", "tetra", "--pairs", 100, "--marks", "3x2",
            "--seed", 7, "--out", tmp_path / "lb.csv", "--posts-out", posts,
        ]) == 0
        doc = json.loads(posts.read_text())
        assert [m["id"] for m in doc["left"]] == ["L1", "L2", "L3"]
        assert len(doc["right"]) == 2

    def test_bad_marks_value_exits_1(self, tmp_path, capsys):
        code = run_cli(["simulate", "--pairs", 10, "--marks", "eight",
                        "--seed", 1, "--out", tmp_path / "x.csv"])
        assert code == 1
        assert "error" in capsys.readouterr().err


class TestStatsAndReconstruct:
    @pytest.fixture()
    def pipeline(self, tmp_path):
        lb = tmp_path / "lb.csv"
        posts = tmp_path / "posts.json"
        stats = tmp_path / "stats.json"
        run_cli(["simulate", "--backend", "qm", "--pairs", 400_000,
                 "--marks", "4x4", "--seed", 11, "--schedule", "cyclic",
                 "--out", lb, "--posts-out", posts])
        run_cli(["stats", "--logbook", lb, "--out", stats])
        return lb, posts, stats

    def test_stats_are_sorted_and_complete(self, pipeline):
        _, _, stats = pipeline
        rows = json.loads(stats.read_text())
        assert len(rows) == 16
        keys = [(r["left"], r["right"]) for r in rows]
        assert keys == sorted(keys)
        assert all(r["n"] == 25_000 for r in rows)

    def test_reconstruct_schema_and_accuracy(self, pipeline, tmp_path):
        _, posts, stats = pipeline
        emb = tmp_path / "embedding.json"
        rep = tmp_path / "rep.json"
        assert run_cli(["reconstruct", "--stats", stats, "--truth", posts,
                        "--out", emb, "--report", rep]) == 0
        doc = json.loads(emb.read_text())
        assert doc["gauge"] == "pole-meridian-chirality"
        assert {m["id"] for m in doc["marks"]} == {
            f"{side}{k}" for side in "LR" for k in range(1, 5)
        }
        for m in doc["marks"]:
            assert math.hypot(m["x"], m["y"], m["z"]) == pytest.approx(1.0, abs=1e-9)
        payload = json.loads(rep.read_text())["payload"]
        assert payload["alignment"]["mean_error"] < 0.05
        assert payload["embeddability"]["rank3_ok"]

    def test_angle_matrix_csv(self, pipeline, tmp_path):
        _, _, stats = pipeline
        angles = tmp_path / "angles.csv"
        assert run_cli(["reconstruct", "--stats", stats, "--out",
                        tmp_path / "e.json", "--angles-out", angles]) == 0
        lines = angles.read_text().strip().splitlines()
        header = lines[0].split(",")
        assert header[0] == "" and len(header) == 9
        first = lines[1].split(",")
        assert first[0] == header[1]
        assert float(first[1]) == 0.0  # zero diagonal


class TestVerifyDist:
    def test_tetra_report(self, tmp_path):
        out = tmp_path / "vd.json"
        assert run_cli(["verify-dist", "--sampler", "tetra", "--n", 200_000,
                        "--seed", 6, "--out", out]) == 0
        doc = json.loads(out.read_text())
        assert doc["sampler"] == "tetra"
        assert doc["zab_uniform"]["passes"]
        assert doc["conditional_upup"]["passes"]

    def test_factorized_fails_conditional(self, tmp_path):
        out = tmp_path / "vd.json"
        assert run_cli(["verify-dist", "--sampler", "factorized", "--n", 200_000,
                        "--seed", 2, "--out", out]) == 0
        doc = json.loads(out.read_text())
        assert not doc["conditional_upup"]["passes"]


class TestChsh:
    def test_quantum_value(self, tmp_path):
        out = tmp_path / "chsh.json"
        assert run_cli(["chsh", "--backend", "qm", "--n-per-setting", 100_000,
                        "--seed", 3, "--out", out]) == 0
        doc = json.loads(out.read_text())
        assert doc["S"] == pytest.approx(-2 * math.sqrt(2), abs=0.03)
        assert doc["angles_deg"] == [0.0, 90.0, 45.0, 135.0]

    def test_bad_angles_exit_1(self, tmp_path):
        assert run_cli(["chsh", "--backend", "qm", "--seed", 1, "--angles",
                        "0,90", "--out", tmp_path / "x.json"]) == 1


class TestFitDensity:
    def test_uniform_recovery_and_format(self, tmp_path):
        out = tmp_path / "density.txt"
        assert run_cli(["fit-density", "--grid-n", 10, "--objective",
                        "max-entropy", "--constraints", "slab-uniform,pair-uniform",
                        "--out", out]) == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "grid_n=10"
        assert len(lines) == 1 + 10**3
        w = np.array([float(x) for x in lines[1:]])
        assert np.abs(w - 1e-3).max() < 1e-9

    def test_full_constraints_report(self, tmp_path):
        rep = tmp_path / "rep.json"
        assert run_cli(["fit-density", "--grid-n", 10, "--out",
                        tmp_path / "d.txt", "--report", rep]) == 0
        doc = json.loads(rep.read_text())
        assert max(doc["payload"]["residuals"].values()) <= 1e-6


class TestGeodesic:
    def test_figure_run_report(self, tmp_path):
        out = tmp_path / "traj.csv"
        rep = tmp_path / "rep.json"
        svg = tmp_path / "views.svg"
        assert run_cli(["geodesic", "--A", 4, "--P", 5, "--W", 1, "--X", 1.2,
                        "--r0", 1, "--theta0", 1.5707963, "--span", 40,
                        "--sign-ur", -1, "--out", out, "--report", rep,
                        "--svg", svg]) == 0
        payload = json.loads(rep.read_text())["payload"]
        assert payload["orbit_class"] == "unbound"
        assert payload["min_r"] == pytest.approx(0.161298, abs=1e-6)
        assert max(payload["drift"].values()) <= 1e-8
        header = out.read_text().splitlines()[0]
        assert header == "s,t,r,theta,phi,Ut,Ur,Utheta,Uphi,drift_P,drift_X,drift_A,drift_W"
        assert svg.read_text().startswith("<svg")

    def test_forbidden_radius_exits_1(self, tmp_path, capsys):
        code = run_cli(["geodesic", "--A", 4, "--P", 5, "--W", 1, "--X", 1.2,
                        "--r0", 0.1, "--theta0", 1.5707963, "--span", 10,
                        "--out", tmp_path / "t.csv"])
        assert code == 1
        assert "(U^r)^2" in capsys.readouterr().err


class TestReportEnvelope:
    def test_envelope_echoes_resolved_seed(self, tmp_path):
        rep = tmp_path / "rep.json"
        run_cli(["simulate", "--backend", "qm", "--pairs", 100, "--marks", "2x2",
                 "--seed", 987, "--out", tmp_path / "l.csv", "--report", rep])
        doc = json.loads(rep.read_text())
        assert doc["config"]["seed"] == 987
        assert doc["config"]["command"] == "simulate"
        assert doc["tool_version"]
        assert "duration_seconds" in doc

    def test_report_payload_reproducible(self, tmp_path):
        reps = []
        for name in ("r1.json", "r2.json"):
            rep = tmp_path / name
            run_cli(["chsh", "--backend", "tetra", "--n-per-setting", 50_000,
                     "--seed", 5, "--out", tmp_path / "chsh.out",
                     "--report", rep])
            doc = json.loads(rep.read_text())
            reps.append((doc["config"], doc["payload"]))
        assert reps[0] == reps[1]


class TestAtomicWrite:
    def test_write_then_read(self, tmp_path):
        path = tmp_path / "f.json"
        atomic_write(str(path), "hello\n")
        assert path.read_text() == "hello\n"

    def test_interrupted_write_leaves_no_file(self, tmp_path, monkeypatch):
        path = tmp_path / "dangerous.json"

        def exploding_replace(src, dst):
            raise OSError("disk went away")

        import os

        monkeypatch.setattr(os, "replace", exploding_replace)
        with pytest.raises(OSError):
            atomic_write(str(path), "partial")
        assert not path.exists()
        leftovers = [p for p in path.parent.iterdir()]
        assert leftovers == []

    def test_unserializable_payload_never_touches_target(self, tmp_path):
        # chsh with nan-producing input is not constructible, so check a
        # json failure directly: allow_nan=False raises before any write
        from spinpair.cli import dump_json

        with pytest.raises(ValueError):
            dump_json({"bad": float("nan")})
