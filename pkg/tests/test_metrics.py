import io
import unittest
from fractions import Fraction

import numpy as np

from ecgnet.exceptions import RecordFormatError
from ecgnet.metrics import (
    ClassMetrics,
    ConfusionMatrix,
    MetricReport,
    average_reports,
    build_report,
    confusion_matrix,
    format_metric,
    macro_average,
    overall_metrics,
    per_class_metrics,
    read_report_csv,
    render_report,
)

# per-class rows (acc, sen, pre, f1) of a published five-class MIT-BIH result
PUBLISHED_ROWS = {
    "A": (0.994, 0.955, 0.955, 0.955),
    "L": (0.999, 0.991, 1.000, 0.995),
    "N": (0.992, 0.997, 0.989, 0.993),
    "R": (1.000, 1.000, 1.000, 1.000),
    "V": (0.994, 0.978, 0.997, 0.987),
}


def published_report():
    per_class = [ClassMetrics(*row) for row in PUBLISHED_ROWS.values()]
    return MetricReport(tuple(PUBLISHED_ROWS), per_class, macro_average(per_class))


def brute_force(cm, c):
    """Exact one-vs-rest metrics by walking every sample of the matrix."""
    tp = fp = fn = tn = 0
    k = cm.shape[0]
    for t in range(k):
        for p in range(k):
            n = int(cm[t, p])
            if t == c and p == c:
                tp += n
            elif t == c:
                fn += n
            elif p == c:
                fp += n
            else:
                tn += n
    total = tp + fp + fn + tn

    def ratio(a, b):
        return Fraction(a, b) if b else Fraction(0)

    sen, pre = ratio(tp, tp + fn), ratio(tp, tp + fp)
    f1 = 2 * sen * pre / (sen + pre) if sen + pre else Fraction(0)
    return ratio(tp + tn, total), sen, pre, f1


class TestConfusionMatrix(unittest.TestCase):

    def test_examples(self):
        np.testing.assert_array_equal(confusion_matrix([0, 1, 2], [0, 1, 2], 3).counts, np.eye(3))
        np.testing.assert_array_equal(confusion_matrix([0, 0, 1], [0, 1, 1], 2).counts, [[1, 1], [0, 1]])
        empty = confusion_matrix([], [], 4)
        self.assertEqual(empty.total, 0)
        self.assertEqual(empty.counts.shape, (4, 4))

    def test_errors(self):
        with self.assertRaises(ValueError):
            confusion_matrix([0, 1], [0], 2)
        with self.assertRaises(ValueError):
            confusion_matrix([0, 2], [0, 1], 2)
        with self.assertRaises(ValueError):
            ConfusionMatrix([[1, -1], [0, 0]])


class TestPerClassMetrics(unittest.TestCase):

    def test_two_class_example(self):
        m = per_class_metrics(ConfusionMatrix([[8, 2], [1, 9]]), 0)
        self.assertAlmostEqual(m.acc, 0.85)
        self.assertAlmostEqual(m.sen, 0.8)
        self.assertAlmostEqual(m.pre, 8 / 9)
        self.assertAlmostEqual(m.f1, 0.8421, places=4)

    def test_perfect_classifier(self):
        cm = ConfusionMatrix(np.diag([3, 5, 7]))
        for c in range(3):
            self.assertEqual(per_class_metrics(cm, c).as_tuple(), (1.0, 1.0, 1.0, 1.0))
        self.assertEqual(overall_metrics(cm).as_tuple(), (1.0, 1.0, 1.0, 1.0))

    def test_absent_class(self):
        m = per_class_metrics(ConfusionMatrix([[4, 0], [0, 0]]), 1)
        self.assertEqual((m.acc, m.sen, m.pre, m.f1), (1.0, 0.0, 0.0, 0.0))

    def test_against_brute_force(self):
        """1000 random matrices recounted exactly"""
        rng = np.random.default_rng(0)
        for _ in range(1000):
            k = int(rng.integers(2, 7))
            counts = rng.integers(0, 50, size=(k, k))
            counts[rng.random((k, k)) < 0.2] = 0
            cm = ConfusionMatrix(counts)
            for c in range(k):
                got = per_class_metrics(cm, c).as_tuple()
                for value, exact in zip(got, brute_force(counts, c)):
                    self.assertAlmostEqual(value, float(exact), delta=1e-12)
                if cm.total:
                    errors = counts[c].sum() + counts[:, c].sum() - 2 * counts[c, c]
                    self.assertAlmostEqual(got[0], 1 - errors / cm.total, delta=1e-12)

    def test_binary_sensitivity_is_other_specificity(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            counts = rng.integers(1, 40, size=(2, 2))
            sen0 = per_class_metrics(ConfusionMatrix(counts), 0).sen
            self.assertAlmostEqual(sen0, counts[0, 0] / (counts[0, 0] + counts[0, 1]))

    def test_permutation(self):
        """Relabelling classes permutes per-class metrics and keeps the macro row"""
        rng = np.random.default_rng(2)
        counts = rng.integers(0, 30, size=(5, 5))
        perm = rng.permutation(5)
        permuted = counts[np.ix_(perm, perm)]
        for new, old in enumerate(perm):
            self.assertEqual(
                per_class_metrics(ConfusionMatrix(permuted), new),
                per_class_metrics(ConfusionMatrix(counts), old),
            )
        a = overall_metrics(ConfusionMatrix(counts)).as_tuple()
        b = overall_metrics(ConfusionMatrix(permuted)).as_tuple()
        np.testing.assert_allclose(a, b, rtol=1e-12)


class TestOverall(unittest.TestCase):

    def test_published_macro_average(self):
        """The per-class columns average to the published overall row"""
        overall = published_report().overall
        self.assertAlmostEqual(overall.acc, 0.9958)
        self.assertAlmostEqual(overall.sen, 0.9842)
        self.assertAlmostEqual(overall.pre, 0.9882)
        rounded = [format_metric(v) for v in overall.as_tuple()]
        self.assertEqual(rounded, ["0.996", "0.984", "0.988", "0.986"])

    def test_f1_of_macro_sen_and_pre(self):
        m = macro_average([ClassMetrics(1, 0.984, 0.988, 0), ClassMetrics(1, 0.984, 0.988, 0)])
        self.assertAlmostEqual(m.f1, 0.986, places=3)
        self.assertEqual(macro_average([ClassMetrics(1, 0, 0, 0)]).f1, 0.0)

    def test_average_reports(self):
        a = build_report(ConfusionMatrix([[8, 2], [1, 9]]), ("N", "A"))
        b = build_report(ConfusionMatrix([[10, 0], [0, 10]]), ("N", "A"))
        mean = average_reports([a, b])
        self.assertAlmostEqual(mean.per_class[0].sen, 0.9)
        self.assertAlmostEqual(mean.overall.acc, (a.overall.acc + 1.0) / 2)
        with self.assertRaises(ValueError):
            average_reports([a, build_report(ConfusionMatrix(np.eye(2)), ("N", "V"))])


class TestRendering(unittest.TestCase):

    def test_half_up(self):
        self.assertEqual(format_metric(0.9958), "0.996")
        self.assertEqual(format_metric(0.1245), "0.125")
        self.assertEqual(format_metric(0.0005), "0.001")
        self.assertEqual(format_metric(1.0), "1.000")
        self.assertEqual(format_metric(0.0), "0.000")

    def test_text_table(self):
        text = render_report(published_report(), "text")
        lines = text.strip().splitlines()
        self.assertEqual(lines[0].split(), ["Types", "Acc", "Sen", "Pre", "F1"])
        self.assertEqual(len(lines), 7)
        self.assertEqual(lines[-1].split(), ["Overall", "0.996", "0.984", "0.988", "0.986"])
        self.assertEqual(render_report(published_report(), "text"), text)

    def test_csv(self):
        csv = render_report(published_report(), "csv")
        lines = csv.splitlines()
        self.assertEqual(lines[0], "class,acc,sen,pre,f1")
        self.assertEqual(lines[1], "A,0.994,0.955,0.955,0.955")
        self.assertEqual(lines[-1], "overall,0.996,0.984,0.988,0.986")
        with self.assertRaises(ValueError):
            render_report(published_report(), "html")

    def test_csv_read_back(self):
        """Comment lines are skipped and the rendered values come back"""
        report = published_report()
        parsed = read_report_csv(io.StringIO("# seed = 0\n" + render_report(report, "csv")))
        self.assertEqual(parsed.classes, report.classes)
        for got, original in zip(parsed.per_class, report.per_class):
            self.assertEqual(got.as_tuple(), original.as_tuple())
        self.assertEqual(parsed.overall.acc, 0.996)
        with self.assertRaises(RecordFormatError):
            read_report_csv(io.StringIO("class,acc\nN,1\n"))

    def test_degenerate_notes(self):
        report = build_report(ConfusionMatrix([[5, 0, 0], [2, 0, 0], [0, 0, 0]]), ("N", "V", "A"))
        self.assertIn("class V: never predicted, pre reported as 0", report.notes)
        self.assertIn("class A: no true samples, sen reported as 0", report.notes)
        self.assertIn("* class A: no true samples, sen reported as 0", render_report(report))


if __name__ == '__main__':
    unittest.main()
