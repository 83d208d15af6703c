import unittest

import numpy as np
import pandas as pd
import plotly.graph_objects as go

from ecgnet.metrics import ConfusionMatrix
from ecgnet.visualization import plot_confusion_matrix, plot_loss_curves


class TestVisualization(unittest.TestCase):

    def setUp(self):
        """Create loss curves of two folds and a confusion matrix"""
        self.history = pd.DataFrame(
            {
                "fold": [0, 0, 0, 1, 1, 1],
                "epoch": [1, 2, 3, 1, 2, 3],
                "loss": [1.6, 1.2, 0.9, 1.5, 1.1, 0.8],
                "accuracy": [0.2, 0.5, 0.7, 0.3, 0.6, 0.8],
            }
        )
        self.cm = ConfusionMatrix([[8, 2, 0], [1, 9, 0], [0, 0, 0]])

    def test_plot_loss_curves(self):
        """Each fold gets a loss trace and an accuracy trace on the second axis"""
        fig = plot_loss_curves(self.history)
        self.assertIsInstance(fig, go.Figure)
        self.assertEqual(len(fig.data), 4)
        names = [trace.name for trace in fig.data]
        self.assertEqual(
            names, ["Fold 0 loss", "Fold 0 accuracy", "Fold 1 loss", "Fold 1 accuracy"]
        )
        np.testing.assert_allclose(fig.data[2].y, [1.5, 1.1, 0.8])
        self.assertEqual(fig.data[1].yaxis, "y2")

    def test_plot_confusion_matrix(self):
        """Colours are row shares, text shows the raw counts"""
        fig = plot_confusion_matrix(self.cm, ["N", "V", "A"])
        heatmap = fig.data[0]
        self.assertIsInstance(heatmap, go.Heatmap)
        np.testing.assert_allclose(heatmap.z[0], [0.8, 0.2, 0.0])
        np.testing.assert_array_equal(heatmap.z[2], [0.0, 0.0, 0.0])
        np.testing.assert_array_equal(heatmap.text, self.cm.counts)
        self.assertEqual(list(heatmap.x), ["N", "V", "A"])


if __name__ == '__main__':
    unittest.main()
