"""Visualization functions for training curves and evaluation results."""

from typing import Sequence

import numpy as np
import pandas as pd
import plotly.graph_objects as go

from .metrics import ConfusionMatrix


def plot_loss_curves(history: pd.DataFrame) -> go.Figure:
    """
    Plot per-epoch loss and training accuracy of every fold using Plotly.

    Parameters
    ----------
    history : pd.DataFrame
        Columns ``fold``, ``epoch``, ``loss``, ``accuracy`` as produced by
        :meth:`ecgnet.training.TrainHistory.to_frame`.

    Returns
    -------
    go.Figure
        Loss on the left axis (solid), accuracy on the right axis (dotted).
    """
    fig = go.Figure()
    for fold, curve in history.groupby("fold", sort=True):
        fig.add_trace(
            go.Scatter(
                x=curve["epoch"],
                y=curve["loss"],
                mode="lines+markers",
                name=f"Fold {fold} loss",
            )
        )
        fig.add_trace(
            go.Scatter(
                x=curve["epoch"],
                y=curve["accuracy"],
                mode="lines",
                line=dict(dash="dot"),
                name=f"Fold {fold} accuracy",
                yaxis="y2",
            )
        )

    fig.update_layout(
        title="Training Curves",
        xaxis_title="Epoch",
        yaxis=dict(title="Cross-entropy loss"),
        yaxis2=dict(title="Training accuracy", overlaying="y", side="right", range=[0, 1]),
        legend=dict(orientation="h", yanchor="bottom", y=1.02, xanchor="right", x=1),
        hovermode="x unified",
        template="plotly_white",
    )
    return fig


def plot_confusion_matrix(cm: ConfusionMatrix, classes: Sequence[str]) -> go.Figure:
    """
    Heatmap of a confusion matrix with row-normalized colours and raw counts.

    Parameters
    ----------
    cm : ConfusionMatrix
        Counts, rows = true class.
    classes : Sequence[str]
        Class codes in index order.

    Returns
    -------
    go.Figure
    """
    counts = cm.counts
    row_totals = counts.sum(axis=1, keepdims=True)
    share = np.divide(
        counts, row_totals, out=np.zeros(counts.shape, dtype=float), where=row_totals > 0
    )
    labels = list(classes)
    fig = go.Figure(
        go.Heatmap(
            z=share,
            x=labels,
            y=labels,
            text=counts,
            texttemplate="%{text}",
            colorscale="Blues",
            zmin=0,
            zmax=1,
            colorbar=dict(title="Row share"),
        )
    )
    fig.update_layout(
        title="Confusion Matrix",
        xaxis_title="Predicted class",
        yaxis_title="True class",
        yaxis=dict(autorange="reversed"),
        template="plotly_white",
    )
    return fig
