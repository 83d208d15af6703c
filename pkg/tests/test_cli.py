import filecmp
import os
import shutil
import tempfile
import unittest

import numpy as np
import pandas as pd
import pytest

from ecgnet.cli import RunConfig, RunManifest, build_parser, main
from ecgnet.data import EcgRecord, write_record
from ecgnet.exceptions import ConfigError
from ecgnet.metrics import read_report_csv
from ecgnet.models.checkpoint import load_checkpoint, save_checkpoint
from ecgnet.models.sevgg_lstm import build_model
from ecgnet.store import read_norm_stats, read_store, write_store
from ecgnet.training import _fold_seed, kfold_split

from .helpers import constant_record, tiny_config, write_text

SYNTHETIC = "classes=5,per_class=8,rate=64,seconds=1"

TINY_RUN = """\
# tiny network for fast runs
conv_parts = 1x4,1x4,2x8,2x8,2x8
se_positions = 4,5
se_reduction = 4
lstm_hidden = 4
fc_sizes = 16,8,5
epochs = 3
batch_size = 8
k_folds = 2
"""


def preprocess_synthetic(out, *extra):
    return main(["preprocess", "--synthetic", SYNTHETIC, "--window-seconds", "1",
                 "--out", out, "-q", *extra])


class CliCase(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def path(self, *parts):
        return os.path.join(self.tmp, *parts)


class TestPreprocess(CliCase):

    def test_synthetic_store(self):
        """The synthetic fixture becomes one normalized store"""
        self.assertEqual(preprocess_synthetic(self.path("store")), 0)
        data = read_store(self.path("store"))
        self.assertEqual(len(data), 40)
        self.assertEqual(data.segment_len, 64)
        self.assertEqual(data.classes, ("N", "V", "L", "R", "A"))
        self.assertTrue(data.normalized)
        np.testing.assert_array_equal(data.class_counts, [8] * 5)
        self.assertGreater(read_norm_stats(self.path("store")).std, 0)

    def test_rerun_is_byte_identical(self):
        preprocess_synthetic(self.path("a"))
        preprocess_synthetic(self.path("b"))
        for name in ("segments.seg", "norm_stats.txt"):
            self.assertTrue(filecmp.cmp(self.path("a", name), self.path("b", name), shallow=False))

    def test_raw_store(self):
        """train_only scope keeps the segments unnormalized"""
        preprocess_synthetic(self.path("raw"), "--norm-scope", "train_only")
        self.assertFalse(read_store(self.path("raw")).normalized)

    def test_records_and_manifest(self):
        """Unlabeled windows and trailing remainders are dropped"""
        rng = np.random.default_rng(0)
        os.makedirs(self.path("data"))
        write_record(EcgRecord("a", 4, rng.normal(size=10)), self.path("data", "a.csv"))
        write_record(EcgRecord("b", 4, rng.normal(size=12)), self.path("data", "b.csv"))
        write_text(
            self.path("manifest.csv"),
            "record_path,segment_index,label_code\n"
            "a.csv,0,N\na.csv,1,V\nb.csv,0,N\nb.csv,2,V\n",
        )
        code = main(["preprocess", "--data", self.path("data"), "--manifest",
                     self.path("manifest.csv"), "--labels", "N,V", "--window-seconds", "1",
                     "--out", self.path("store"), "-q"])
        self.assertEqual(code, 0)
        data = read_store(self.path("store"))
        self.assertEqual(len(data), 4)
        self.assertEqual(data.segment_len, 4)
        np.testing.assert_array_equal(data.labels, [0, 1, 0, 1])

    def test_constant_signal_fails(self):
        os.makedirs(self.path("data"))
        write_record(constant_record(0.5), self.path("data", "flat.csv"))
        write_text(
            self.path("manifest.csv"),
            "record_path,segment_index,label_code\nflat.csv,0,N\nflat.csv,1,N\n",
        )
        code = main(["preprocess", "--data", self.path("data"), "--manifest",
                     self.path("manifest.csv"), "--window-seconds", "1",
                     "--out", self.path("store"), "-q"])
        self.assertEqual(code, 1)

    def test_missing_inputs(self):
        self.assertEqual(main(["preprocess", "--out", self.path("store"), "-q"]), 1)


class TestParser(unittest.TestCase):

    def test_global_flags_before_subcommand(self):
        """Flags given before the subcommand survive subcommand parsing"""
        args = build_parser().parse_args(["--seed", "5", "-v", "train", "--out", "x"])
        self.assertEqual(args.seed, 5)
        self.assertTrue(args.verbose)
        self.assertFalse(args.quiet)

    def test_global_flags_after_subcommand(self):
        args = build_parser().parse_args(["train", "--out", "x", "--seed", "7", "-q"])
        self.assertEqual(args.seed, 7)
        self.assertTrue(args.quiet)
        self.assertFalse(args.verbose)

    def test_defaults(self):
        args = build_parser().parse_args(["report", "--runs", "a", "--out", "b"])
        self.assertIsNone(args.seed)
        self.assertFalse(args.verbose)
        self.assertFalse(args.quiet)


class TestRunConfig(unittest.TestCase):

    def test_unknown_key(self):
        with self.assertRaises(ConfigError):
            RunConfig.from_mapping({"epoch": "3"})

    def test_seed_override(self):
        cfg = RunConfig.from_mapping({"seed": "4", "epochs": "2"}, seed=9)
        self.assertEqual(cfg.train.seed, 9)
        self.assertEqual(cfg.train.epochs, 2)

    def test_model_config_against_store(self):
        values = {
            "conv_parts": "1x4,1x4,2x8,2x8,2x8",
            "se_reduction": "4",
            "lstm_hidden": "4",
            "fc_sizes": "16,8,5",
        }
        cfg = RunConfig.from_mapping(values).model_config(64, 5)
        self.assertEqual(cfg, tiny_config())
        with self.assertRaises(ConfigError):
            RunConfig.from_mapping({**values, "input_len": "128"}).model_config(64, 5)


class TestTrain(CliCase):

    def setUp(self):
        super().setUp()
        preprocess_synthetic(self.path("store"))
        write_text(self.path("run.conf"), TINY_RUN)

    def train(self, out, config="run.conf", *extra):
        return main(["train", "--segments", self.path("store"), "--config", self.path(config),
                     "--out", self.path(out), "-q", *extra])

    def test_artifacts(self):
        self.assertEqual(self.train("run", "run.conf", "--plots"), 0)
        for name in ("fold0.ckpt", "fold1.ckpt", "fold0.metrics.csv", "fold1.metrics.txt",
                     "loss.csv", "summary.metrics.csv", "summary.metrics.txt", "manifest.txt",
                     "loss.html", "fold1.confusion.html"):
            self.assertTrue(os.path.isfile(self.path("run", name)), name)

        curves = pd.read_csv(self.path("run", "loss.csv"), comment="#")
        self.assertEqual(len(curves), 6)
        self.assertEqual(curves.groupby("fold").size().tolist(), [3, 3])

        report = read_report_csv(self.path("run", "fold0.metrics.csv"))
        self.assertEqual(report.classes, ("N", "V", "L", "R", "A"))
        with open(self.path("run", "fold0.metrics.csv"), encoding="utf-8") as fh:
            self.assertIn("# k_folds = 2\n", fh.read())

        manifest = RunManifest.read(self.path("run", "manifest.txt"))
        self.assertEqual(manifest.seed, 0)
        self.assertTrue(manifest.dataset_fingerprint.startswith("sha256:"))
        self.assertEqual(manifest.config["lstm_hidden"], "4")
        self.assertEqual(manifest.artifacts["summary_metrics"], "summary.metrics.csv")

    def test_deterministic(self):
        self.train("one")
        self.train("two")
        for name in ("fold0.metrics.csv", "fold1.metrics.csv", "loss.csv", "fold0.ckpt"):
            self.assertTrue(filecmp.cmp(self.path("one", name), self.path("two", name),
                                        shallow=False), name)

    def test_zero_learning_rate_keeps_initial_parameters(self):
        write_text(self.path("frozen.conf"), TINY_RUN + "learning_rate = 0\nseed = 3\n")
        self.assertEqual(self.train("frozen", "frozen.conf"), 0)
        for k in range(2):
            stored = load_checkpoint(self.path("frozen", f"fold{k}.ckpt")).parameters()
            initial = build_model(tiny_config(), _fold_seed(3, k, 1)).parameters()
            self.assertEqual(set(stored), set(initial))
            for name, value in initial.items():
                np.testing.assert_array_equal(stored[name], value, err_msg=name)

    def test_bad_config(self):
        write_text(self.path("bad.conf"), TINY_RUN + "input_len = 128\n")
        self.assertEqual(self.train("bad", "bad.conf"), 1)
        write_text(self.path("typo.conf"), TINY_RUN + "learnig_rate = 0.1\n")
        self.assertEqual(self.train("typo", "typo.conf"), 1)


class TestEvaluate(CliCase):

    def setUp(self):
        super().setUp()
        preprocess_synthetic(self.path("store"))

    def constant_checkpoint(self, cfg):
        """Checkpoint whose logits ignore the input and always favour class 0"""
        model = build_model(cfg, seed=0)
        params = model.parameters()
        params["fc3.weights"] = np.zeros_like(params["fc3.weights"])
        params["fc3.bias"] = np.array([20, 0, 0, 0, 0], dtype=np.float32)
        model.set_parameters(params)
        save_checkpoint(model, self.path("model.ckpt"))
        return self.path("model.ckpt")

    def test_constant_predictor(self):
        checkpoint = self.constant_checkpoint(tiny_config())
        code = main(["evaluate", "--checkpoint", checkpoint, "--segments", self.path("store"),
                     "--out", self.path("eval", "report.csv"), "-q"])
        self.assertEqual(code, 0)
        with open(self.path("eval", "report.csv"), encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        self.assertEqual(lines[0], "class,acc,sen,pre,f1")
        self.assertEqual(lines[1], "N,0.200,1.000,0.200,0.333")
        self.assertEqual(lines[2], "V,0.800,0.000,0.000,0.000")
        self.assertEqual(lines[-1], "overall,0.680,0.200,0.040,0.067")
        self.assertTrue(os.path.isfile(self.path("eval", "report.txt")))

    def test_raw_store_is_normalized(self):
        preprocess_synthetic(self.path("raw"), "--norm-scope", "train_only")
        checkpoint = self.constant_checkpoint(tiny_config())
        code = main(["evaluate", "--checkpoint", checkpoint, "--segments", self.path("raw"),
                     "--out", self.path("raw_report.csv"), "-q"])
        self.assertEqual(code, 0)

    def test_wrong_input_length(self):
        checkpoint = self.constant_checkpoint(tiny_config(input_len=128))
        code = main(["evaluate", "--checkpoint", checkpoint, "--segments", self.path("store"),
                     "--out", self.path("report.csv"), "-q"])
        self.assertEqual(code, 1)
        self.assertFalse(os.path.exists(self.path("report.csv")))


class TestTrainThenEvaluate(CliCase):

    def setUp(self):
        super().setUp()
        preprocess_synthetic(self.path("store"))

    def train_and_score(self, extra_config, epochs=3):
        """
        Train a two-fold run, then evaluate every fold checkpoint on the rows
        that fold trained on.

        Returns (evaluated accuracy, final-epoch training accuracy) per fold.
        """
        config = TINY_RUN.replace("epochs = 3", f"epochs = {epochs}")
        write_text(self.path("run.conf"), config + "oversample = false\n" + extra_config)
        code = main(["--seed", "2", "-q", "train", "--segments", self.path("store"),
                     "--config", self.path("run.conf"), "--out", self.path("run")])
        self.assertEqual(code, 0)
        self.assertEqual(RunManifest.read(self.path("run", "manifest.txt")).seed, 2)
        curves = pd.read_csv(self.path("run", "loss.csv"), comment="#")
        data = read_store(self.path("store"))
        pairs = []
        for split in kfold_split(len(data), 2, seed=2):
            k = split.fold_index
            train_rows = data.subset(split.train_indices)
            write_store(self.path(f"train{k}"), train_rows)
            code = main(["evaluate", "--checkpoint", self.path("run", f"fold{k}.ckpt"),
                         "--segments", self.path(f"train{k}"),
                         "--out", self.path(f"train{k}.csv"), "-q"])
            self.assertEqual(code, 0)
            report = read_report_csv(self.path(f"train{k}.csv"))
            recalls = np.array([m.sen for m in report.per_class])
            evaluated = float(np.sum(recalls * train_rows.class_counts)) / len(train_rows)
            final = curves[curves["fold"] == k].sort_values("epoch")["accuracy"].iloc[-1]
            pairs.append((evaluated, float(final)))
        return pairs

    def test_frozen_checkpoint_matches_training_accuracy(self):
        """Without updates, scoring the training rows reproduces the training accuracy"""
        for evaluated, final in self.train_and_score("learning_rate = 0\n"):
            self.assertAlmostEqual(evaluated, final, delta=1e-3)

    @pytest.mark.slow
    def test_trained_checkpoint_scores_at_least_training_accuracy(self):
        """A fitted checkpoint scores its own training rows no worse than the last epoch did"""
        pairs = self.train_and_score("learning_rate = 0.01\n", epochs=40)
        for evaluated, final in pairs:
            self.assertGreaterEqual(evaluated + 1e-3, final)


class TestReport(CliCase):

    def setUp(self):
        super().setUp()
        preprocess_synthetic(self.path("store"))
        write_text(self.path("run.conf"), TINY_RUN.replace("epochs = 3", "epochs = 1"))
        for run, seed in (("run_a", "0"), ("run_b", "1")):
            main(["train", "--segments", self.path("store"), "--config", self.path("run.conf"),
                  "--out", self.path(run), "--seed", seed, "-q"])

    def overall_row(self, run):
        frame = pd.read_csv(self.path(run, "summary.metrics.csv"), comment="#", dtype=str)
        return frame[frame["class"] == "overall"].iloc[0].tolist()[1:]

    def test_comparison_table(self):
        code = main(["report", "--runs", self.path("run_a"), self.path("run_b"),
                     "--out", self.path("compare.csv"), "-q"])
        self.assertEqual(code, 0)
        table = pd.read_csv(self.path("compare.csv"), dtype=str)
        self.assertEqual(list(table.columns), ["run", "acc", "sen", "pre", "f1"])
        self.assertEqual(table["run"].tolist(), ["run_a", "run_b"])
        self.assertEqual(table.iloc[0].tolist()[1:], self.overall_row("run_a"))
        self.assertEqual(table.iloc[1].tolist()[1:], self.overall_row("run_b"))
        self.assertTrue(os.path.isfile(self.path("compare.txt")))

    def test_corrupt_manifest_is_named(self):
        manifest = self.path("run_b", "manifest.txt")
        write_text(manifest, "this is not a manifest\n")
        with self.assertLogs("ecgnet.cli", level="ERROR") as logs:
            code = main(["report", "--runs", self.path("run_a"), self.path("run_b"),
                         "--out", self.path("compare.csv"), "-q"])
        self.assertEqual(code, 1)
        self.assertIn(manifest, "\n".join(logs.output))


if __name__ == '__main__':
    unittest.main()
