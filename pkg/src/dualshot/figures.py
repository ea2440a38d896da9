"""Matplotlib rendering for the report commands.

Every report figure is rendered next to its authoritative CSV; the CSV is
what tests and manifests pin, the PNG is the human view of the same data.
Uses the Agg backend and strips the Software tag so repeated runs emit
identical bytes.
"""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 - backend must be set first

__all__ = ["save_bars", "save_curve", "save_grouped_bars"]

_SAVE_KW = {"dpi": 110, "metadata": {"Software": None}}


def save_curve(path: str, xs: Sequence[float], ys: Sequence[float],
               xlabel: str, ylabel: str, title: str, logy: bool = False) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(xs, ys, lw=1.5)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_bars(path: str, labels: Sequence[str], values: Sequence[float],
              xlabel: str, ylabel: str, title: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(range(len(values)), values, color="#4878a8")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_grouped_bars(path: str, labels: Sequence[str],
                      series: dict[str, Sequence[float]],
                      xlabel: str, ylabel: str, title: str) -> None:
    fig, ax = plt.subplots(figsize=(6.5, 4))
    n = len(series)
    width = 0.8 / max(n, 1)
    for k, (name, values) in enumerate(series.items()):
        offs = [i + (k - (n - 1) / 2) * width for i in range(len(values))]
        ax.bar(offs, values, width=width, label=name)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
