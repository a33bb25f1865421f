"""Command line front end, driven in-process through main(argv).

Running in-process keeps exit codes, stdout, stderr, and every file the
commands write open to direct assertion without subprocess plumbing.
"""

import csv
import io

import numpy as np
import pytest

from mvsc.cli import main
from mvsc.data import (
    MultiViewFeatureMatrix,
    load_features,
    load_model,
    save_features,
    save_labels,
)

from conftest import write_annotation, write_pgm


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def small_synth(capsys, tmp_path, prefix="data", seed=0, classes=3):
    """Generate a small labeled instance and return its file paths."""
    out = tmp_path / prefix
    code, _, _ = run(
        capsys,
        "synth",
        "--views", "2",
        "--dims", "10",
        "--atoms", "9",
        "--samples", "30",
        "--sparsity", "2",
        "--snr", "20",
        "--classes", str(classes),
        "--separation", "3.0",
        "--seed", str(seed),
        "--output-prefix", str(out),
    )
    assert code == 0
    return f"{out}.feat", f"{out}.labels.csv"


FAST_SOLVER = ("--outer-max", "15", "--inner-max", "100")


# ---------------------------------------------------------------------------


class TestParsing:
    def test_version_exits_cleanly(self, capsys):
        code, out, _ = run(capsys, "--version")
        assert code == 0
        assert out.startswith("mvsc ")

    def test_no_command_is_usage_error(self, capsys):
        code, _, err = run(capsys)
        assert code == 2
        assert "usage" in err

    def test_unknown_flag_is_usage_error(self, capsys):
        code, _, err = run(capsys, "synth", "--output-prefix", "x", "--bogus")
        assert code == 2

    def test_bad_method_is_usage_error(self, capsys):
        code, _, err = run(
            capsys, "train", "--features", "x", "--output", "y", "--method", "nonsense"
        )
        assert code == 2
        assert "single:<view>" in err

    def test_bad_split_ratio_is_usage_error(self, capsys):
        code, _, err = run(
            capsys, "train", "--features", "x", "--output", "y", "--split", "ratio:1.5"
        )
        assert code == 2
        assert "(0, 1)" in err


# ---------------------------------------------------------------------------


class TestSynth:
    def test_writes_three_files(self, capsys, tmp_path):
        out = tmp_path / "inst"
        code, stdout, _ = run(
            capsys, "synth", "--samples", "12", "--atoms", "6",
            "--output-prefix", str(out),
        )
        assert code == 0
        for suffix in (".feat", ".labels.csv", ".truth"):
            assert (tmp_path / f"inst{suffix}").exists()
        assert "samples: 12" in stdout
        assert f"features: {out}.feat" in stdout

    def test_single_dim_repeats_across_views(self, capsys, tmp_path):
        out = tmp_path / "inst"
        code, stdout, _ = run(
            capsys, "synth", "--views", "3", "--dims", "7", "--samples", "8",
            "--atoms", "4", "--output-prefix", str(out),
        )
        assert code == 0
        features = load_features(f"{out}.feat")
        assert features.view_dims == [7, 7, 7]
        assert "view view2: 7" in stdout

    def test_same_seed_same_bytes(self, capsys, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out in (a, b):
            assert run(
                capsys, "synth", "--samples", "10", "--atoms", "5", "--seed", "7",
                "--output-prefix", str(out),
            )[0] == 0
        assert (tmp_path / "a.feat").read_bytes() == (tmp_path / "b.feat").read_bytes()
        assert (tmp_path / "a.truth").read_bytes() == (tmp_path / "b.truth").read_bytes()

    def test_seed_changes_data(self, capsys, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        for out, seed in ((a, "7"), (b, "8")):
            assert run(
                capsys, "synth", "--samples", "10", "--atoms", "5", "--seed", seed,
                "--output-prefix", str(out),
            )[0] == 0
        assert (tmp_path / "a.feat").read_bytes() != (tmp_path / "b.feat").read_bytes()


# ---------------------------------------------------------------------------


class TestTrainEval:
    def test_pipeline(self, capsys, tmp_path):
        feat, labels = small_synth(capsys, tmp_path)
        model = tmp_path / "model.mvsc"
        code, stdout, stderr = run(
            capsys,
            "train", "--features", feat, "--labels", labels,
            "--split", "ratio:0.5", "--seed", "0",
            "--atoms", "9", "--lambda", "0.01", "--gamma", "0.01",
            *FAST_SOLVER,
            "--output", str(model),
        )
        assert code == 0
        assert model.exists()
        assert (tmp_path / "model.mvsc.trace.csv").exists()
        assert "chosen: lam=0.01 gamma=0.01 atoms=9" in stdout
        assert "ls rate:" in stdout
        assert "svm rate:" in stdout
        # progress chatter goes to stderr, results to stdout
        assert "fit lam=" in stderr

        code, stdout, _ = run(
            capsys, "eval", "--model", str(model), "--features", feat,
            "--labels", labels, "--split", "archive",
        )
        assert code == 0
        assert "LS" in stdout and "SVM" in stdout
        assert "Aver" in stdout

    def test_eval_split_all_and_csv(self, capsys, tmp_path):
        feat, labels = small_synth(capsys, tmp_path)
        model = tmp_path / "m.mvsc"
        run(
            capsys, "train", "--features", feat, "--labels", labels,
            "--split", "all", "--classifier", "ls", "--atoms", "9",
            *FAST_SOLVER, "--output", str(model), "--quiet",
        )
        code, stdout, _ = run(
            capsys, "eval", "--model", str(model), "--features", feat,
            "--labels", labels, "--split", "all", "--format", "csv",
        )
        assert code == 0
        rows = list(csv.reader(io.StringIO(stdout)))
        assert rows[0][0] == "method"
        assert rows[1][0] == "LS"

    def test_eval_archive_split_needs_recorded_test_ids(self, capsys, tmp_path):
        feat, labels = small_synth(capsys, tmp_path)
        model = tmp_path / "m.mvsc"
        run(
            capsys, "train", "--features", feat, "--labels", labels,
            "--split", "all", "--classifier", "ls", "--atoms", "9",
            *FAST_SOLVER, "--output", str(model), "--quiet",
        )
        code, _, err = run(
            capsys, "eval", "--model", str(model), "--features", feat,
            "--labels", labels, "--split", "archive",
        )
        assert code == 2
        assert "--split all" in err

    def test_eval_output_files_match_stdout(self, capsys, tmp_path):
        feat, labels = small_synth(capsys, tmp_path)
        model = tmp_path / "m.mvsc"
        run(
            capsys, "train", "--features", feat, "--labels", labels,
            "--split", "ratio:0.5", "--classifier", "both", "--atoms", "9",
            *FAST_SOLVER, "--output", str(model), "--quiet",
        )
        prefix = tmp_path / "report"
        code, stdout, _ = run(
            capsys, "eval", "--model", str(model), "--features", feat,
            "--labels", labels, "--output", str(prefix),
        )
        assert code == 0
        text = (tmp_path / "report.txt").read_text()
        confusion = (tmp_path / "report.confusion.txt").read_text()
        assert stdout == text + confusion
        assert (tmp_path / "report.csv").read_text().startswith("method,")

    def test_reruns_are_byte_identical(self, capsys, tmp_path):
        feat, labels = small_synth(capsys, tmp_path)
        outputs = []
        for name in ("m1.mvsc", "m2.mvsc"):
            model = tmp_path / name
            code, _, _ = run(
                capsys, "train", "--features", feat, "--labels", labels,
                "--split", "ratio:0.5", "--seed", "3", "--atoms", "9",
                *FAST_SOLVER, "--output", str(model), "--quiet",
            )
            assert code == 0
            outputs.append(model)
        assert outputs[0].read_bytes() == outputs[1].read_bytes()
        assert (
            (tmp_path / "m1.mvsc.trace.csv").read_bytes()
            == (tmp_path / "m2.mvsc.trace.csv").read_bytes()
        )

    def test_trace_is_a_monotone_objective_log(self, capsys, tmp_path):
        feat, labels = small_synth(capsys, tmp_path)
        model = tmp_path / "m.mvsc"
        trace = tmp_path / "own-name.csv"
        code, stdout, _ = run(
            capsys, "train", "--features", feat, "--labels", labels,
            "--split", "all", "--classifier", "ls", "--atoms", "9",
            *FAST_SOLVER, "--output", str(model), "--trace", str(trace), "--quiet",
        )
        assert code == 0
        assert f"trace: {trace}" in stdout
        rows = trace.read_text().splitlines()
        assert rows[0] == "iteration,total,fit_term,dict_penalty,code_penalty"
        totals = [float(r.split(",")[1]) for r in rows[1:]]
        assert len(totals) >= 2
        assert all(b <= a + 1e-12 for a, b in zip(totals, totals[1:]))
        parts = [list(map(float, r.split(",")[1:])) for r in rows[1:]]
        for total, fit, dpen, cpen in parts:
            assert total == pytest.approx(fit + dpen + cpen, rel=1e-12)

    def test_model_metadata_records_split_and_choice(self, capsys, tmp_path):
        feat, labels = small_synth(capsys, tmp_path)
        model = tmp_path / "m.mvsc"
        run(
            capsys, "train", "--features", feat, "--labels", labels,
            "--split", "ratio:0.5", "--seed", "5", "--classifier", "ls",
            "--atoms", "9", *FAST_SOLVER, "--output", str(model), "--quiet",
        )
        archive = load_model(model)
        meta = archive.metadata
        assert meta["seed"] == 5
        assert len(meta["train_ids"]) == 15
        assert len(meta["test_ids"]) == 15
        assert not set(meta["train_ids"]) & set(meta["test_ids"])
        assert meta["chosen"] == {"lam": 0.01, "gamma": 0.01, "n_atoms": 9}
        assert "created" not in meta

    def test_created_stamp_follows_source_date_epoch(self, capsys, tmp_path, monkeypatch):
        feat, labels = small_synth(capsys, tmp_path)
        model = tmp_path / "m.mvsc"
        monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
        run(
            capsys, "train", "--features", feat, "--labels", labels,
            "--split", "all", "--classifier", "ls", "--atoms", "9",
            *FAST_SOLVER, "--output", str(model), "--quiet",
        )
        assert load_model(model).metadata["created"] == 1700000000

    def test_single_view_method_restricts_training(self, capsys, tmp_path):
        feat, labels = small_synth(capsys, tmp_path)
        model = tmp_path / "m.mvsc"
        code, _, _ = run(
            capsys, "train", "--features", feat, "--labels", labels,
            "--method", "single:view1", "--split", "ratio:0.5",
            "--classifier", "ls", "--atoms", "9", *FAST_SOLVER,
            "--output", str(model), "--quiet",
        )
        assert code == 0
        archive = load_model(model)
        assert archive.dictionaries.n_views == 1
        assert archive.descriptor.startswith("single:view1")
        # eval restricts the two-view file to the same view before checking
        code, stdout, _ = run(
            capsys, "eval", "--model", str(model), "--features", feat,
            "--labels", labels, "--split", "archive",
        )
        assert code == 0
        assert "Aver" in stdout

    def test_method_partition_mismatch_is_usage_error(self, capsys, tmp_path):
        feat, labels = small_synth(capsys, tmp_path)
        code, _, err = run(
            capsys, "train", "--features", feat, "--labels", labels,
            "--method", "gmcfa", "--output", str(tmp_path / "m.mvsc"),
        )
        assert code == 2
        assert "'region'" in err and "'synthetic'" in err


# ---------------------------------------------------------------------------


class TestSweeps:
    def test_atoms_sweep_scales_by_class_count(self, capsys, tmp_path):
        feat, labels = small_synth(capsys, tmp_path, classes=3)
        model = tmp_path / "m.mvsc"
        code, stdout, _ = run(
            capsys, "train", "--features", feat, "--labels", labels,
            "--split", "ratio:0.5", "--classifier", "ls",
            "--sweep-atoms", "2,3", *FAST_SOLVER,
            "--output", str(model), "--quiet",
        )
        assert code == 0
        sweep = (tmp_path / "m.mvsc.sweep.csv").read_text().splitlines()
        assert sweep[0] == "lam,gamma,n_atoms,ls_rate,svm_rate"
        assert len(sweep) == 3
        atoms_tried = [int(r.split(",")[2]) for r in sweep[1:]]
        assert atoms_tried == [6, 9]
        assert all(r.split(",")[4] == "NA" for r in sweep[1:])
        assert f"sweep: {model}.sweep.csv" in stdout
        chosen = load_model(model).metadata["chosen"]["n_atoms"]
        assert chosen in (6, 9)

    def test_sweep_without_holdout_is_usage_error(self, capsys, tmp_path):
        feat, labels = small_synth(capsys, tmp_path)
        code, _, err = run(
            capsys, "train", "--features", feat, "--labels", labels,
            "--split", "all", "--sweep-gamma", "0.01,0.1",
            "--output", str(tmp_path / "m.mvsc"),
        )
        assert code == 2
        assert "held-out" in err


# ---------------------------------------------------------------------------


class TestFailureExits:
    def test_missing_labels_is_usage_error(self, capsys, tmp_path):
        feat, _ = small_synth(capsys, tmp_path)
        code, _, err = run(
            capsys, "train", "--features", feat, "--output", str(tmp_path / "m"),
        )
        assert code == 2
        assert "labels are required" in err

    def test_missing_feature_file_is_data_error(self, capsys, tmp_path):
        code, _, err = run(
            capsys, "train", "--features", str(tmp_path / "nope.feat"),
            "--labels", str(tmp_path / "nope.csv"), "--output", str(tmp_path / "m"),
        )
        assert code == 3

    def test_unlabeled_sample_is_data_error(self, capsys, tmp_path):
        feat, _ = small_synth(capsys, tmp_path)
        partial = tmp_path / "partial.csv"
        save_labels(partial, ["sample-00000"], ["0"])
        code, _, err = run(
            capsys, "train", "--features", feat, "--labels", str(partial),
            "--output", str(tmp_path / "m"),
        )
        assert code == 3
        assert "no label for sample" in err

    def test_degenerate_classifier_input_is_numeric_error(self, capsys, tmp_path):
        # an enormous code penalty zeroes every code, and the ridge-free
        # normal equations over a zero matrix cannot be solved
        feat, labels = small_synth(capsys, tmp_path)
        code, _, err = run(
            capsys, "train", "--features", feat, "--labels", labels,
            "--split", "all", "--classifier", "ls", "--ridge", "0",
            "--gamma", "1e8", "--atoms", "9", *FAST_SOLVER,
            "--output", str(tmp_path / "m"), "--quiet",
        )
        assert code == 4
        assert "ridge" in err

    def test_incomplete_paper_coverage_is_protocol_error(self, capsys, tmp_path):
        ids = ["a1.png", "a2.png", "b1.png"]
        rng = np.random.default_rng(0)
        features = MultiViewFeatureMatrix(
            [rng.normal(size=(4, 3)), rng.normal(size=(4, 3))], ids
        )
        feat = tmp_path / "f.feat"
        save_features(feat, features)
        manifest = tmp_path / "man.csv"
        manifest.write_text(
            "image_path,subject_id,expression,annotation_path\n"
            "a1.png,s1,HA,a1.txt\n"
            "a2.png,s1,SA,a2.txt\n"
            "b1.png,s2,HA,b1.txt\n"
        )
        code, _, err = run(
            capsys, "train", "--features", str(feat), "--manifest", str(manifest),
            "--split", "paper", "--output", str(tmp_path / "m"),
        )
        assert code == 5
        assert "full coverage" in err

    def test_paper_split_without_manifest_is_usage_error(self, capsys, tmp_path):
        feat, labels = small_synth(capsys, tmp_path)
        code, _, err = run(
            capsys, "train", "--features", feat, "--labels", labels,
            "--split", "paper", "--output", str(tmp_path / "m"),
        )
        assert code == 2
        assert "requires --manifest" in err

    def test_eval_rejects_mismatched_features(self, capsys, tmp_path):
        feat, labels = small_synth(capsys, tmp_path)
        model = tmp_path / "m.mvsc"
        run(
            capsys, "train", "--features", feat, "--labels", labels,
            "--split", "all", "--classifier", "ls", "--atoms", "9",
            *FAST_SOLVER, "--output", str(model), "--quiet",
        )
        other = tmp_path / "other"
        run(
            capsys, "synth", "--views", "2", "--dims", "11", "--samples", "8",
            "--atoms", "4", "--output-prefix", str(other),
        )
        code, _, err = run(
            capsys, "eval", "--model", str(model), "--features", f"{other}.feat",
            "--labels", f"{other}.labels.csv", "--split", "all",
        )
        assert code == 2
        assert "dimension" in err


# ---------------------------------------------------------------------------


def face_dataset(tmp_path, n_subjects=2, expressions=("HA", "SA"), copies=1):
    """Tiny PGM faces with six annotated points in three regions."""
    points = [(8, 8), (16, 10), (24, 8), (10, 20), (16, 24), (24, 20)]
    regions = ["forehead", "forehead", "eye", "eye", "mouth", "mouth"]
    rows = ["image_path,subject_id,expression,annotation_path"]
    rng = np.random.default_rng(42)
    for s in range(n_subjects):
        for expr in expressions:
            for c in range(copies):
                stem = f"s{s}_{expr}_{c}"
                img = tmp_path / f"{stem}.pgm"
                ann = tmp_path / f"{stem}.txt"
                write_pgm(img, rng.integers(0, 256, size=(32, 32)))
                write_annotation(ann, points, regions)
                rows.append(f"{img},s{s},{expr},{ann}")
    manifest = tmp_path / "manifest.csv"
    manifest.write_text("\n".join(rows) + "\n")
    return manifest


SMALL_BANK = ("--scales", "2", "--orientations", "4", "--window-radius", "5")


class TestExtract:
    def test_region_partition_end_to_end(self, capsys, tmp_path):
        manifest = face_dataset(tmp_path)
        out = tmp_path / "faces.feat"
        code, stdout, _ = run(
            capsys, "extract", str(manifest), "--output", str(out),
            "--points", "6", *SMALL_BANK, "--quiet",
        )
        assert code == 0
        features = load_features(out)
        assert features.view_names == ["forehead", "eye", "mouth"]
        assert features.descriptor == "region"
        # 2 points per region, 2 scales x 4 orientations per point
        assert features.view_dims == [16, 16, 16]
        assert features.n_samples == 4
        assert features.gabor_info["num_scales"] == 2
        assert "view forehead: 16" in stdout

    def test_orientation_partition(self, capsys, tmp_path):
        manifest = face_dataset(tmp_path)
        out = tmp_path / "faces.feat"
        code, _, _ = run(
            capsys, "extract", str(manifest), "--method", "mogfa",
            "--output", str(out), "--points", "6", *SMALL_BANK, "--quiet",
        )
        assert code == 0
        features = load_features(out)
        assert features.view_names == ["ori0", "ori1", "ori2", "ori3"]
        assert features.descriptor == "orientation"
        # 6 points x 2 scales per orientation
        assert features.view_dims == [12, 12, 12, 12]

    def test_whole_vector(self, capsys, tmp_path):
        manifest = face_dataset(tmp_path)
        out = tmp_path / "faces.feat"
        code, _, _ = run(
            capsys, "extract", str(manifest), "--method", "whole",
            "--output", str(out), "--points", "6", *SMALL_BANK, "--quiet",
        )
        assert code == 0
        features = load_features(out)
        assert features.view_names == ["whole"]
        assert features.view_dims == [48]

    def test_bad_annotation_reports_and_writes_nothing(self, capsys, tmp_path):
        manifest = face_dataset(tmp_path)
        # truncate one annotation so the strict point count fails
        victim = tmp_path / "s0_HA_0.txt"
        victim.write_text("8 8 forehead\n")
        out = tmp_path / "faces.feat"
        code, _, err = run(
            capsys, "extract", str(manifest), "--output", str(out),
            "--points", "6", *SMALL_BANK, "--quiet",
        )
        assert code == 3
        assert f"error: {tmp_path / 's0_HA_0.pgm'}" in err
        assert not out.exists()

    def test_extract_then_train_with_manifest_labels(self, capsys, tmp_path):
        manifest = face_dataset(tmp_path, n_subjects=2, copies=2)
        out = tmp_path / "faces.feat"
        run(
            capsys, "extract", str(manifest), "--output", str(out),
            "--points", "6", *SMALL_BANK, "--quiet",
        )
        model = tmp_path / "faces.mvsc"
        code, stdout, _ = run(
            capsys, "train", "--features", str(out), "--manifest", str(manifest),
            "--task", "fer", "--split", "paper", "--seed", "1",
            "--classifier", "ls", "--atoms", "4", "--gamma", "0.001",
            *FAST_SOLVER, "--output", str(model), "--quiet",
        )
        assert code == 0
        archive = load_model(model)
        # one held-out image per (subject, expression) pair
        assert len(archive.metadata["test_ids"]) == 4
        assert len(archive.metadata["train_ids"]) == 4
        assert archive.gabor_params is not None
        assert archive.gabor_params.num_scales == 2
        code, stdout, _ = run(
            capsys, "eval", "--model", str(model), "--features", str(out),
            "--manifest", str(manifest), "--split", "archive",
        )
        assert code == 0
        assert "Aver" in stdout
