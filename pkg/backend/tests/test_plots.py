"""
test_plots.py - Unit tests for the importance and PCA figures.
"""

import os
import sys
import tempfile

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from modules.classifiers import ImportanceReport
from modules.pca import pca_fit
from modules.plots import plot_cumulative, plot_importance, plot_loadings, plot_scree

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def fitted_pca():
    rng = np.random.default_rng(5)
    base = rng.normal(size=(200, 2))
    X = np.column_stack([base[:, 0], base[:, 0] + 0.1 * base[:, 1], base[:, 1], rng.normal(size=200)])
    return pca_fit(X, ["flag_rst", "flag_syn", "fwd_iat_mean", "idle_max"])


def is_png(path):
    with open(path, "rb") as f:
        return f.read(8) == PNG_MAGIC


def test_importance_bars_written():
    report = ImportanceReport((("flag_rst", 0.6), ("init_win_fwd", 0.3), ("fwd_pkt_cnt", 0.1)))
    with tempfile.TemporaryDirectory() as tmp:
        path = plot_importance(report, os.path.join(tmp, "importance.png"))
        assert is_png(path)
        assert os.listdir(tmp) == ["importance.png"]


def test_pca_figures_written():
    model = fitted_pca()
    with tempfile.TemporaryDirectory() as tmp:
        paths = [
            plot_scree(model, os.path.join(tmp, "scree.png")),
            plot_cumulative(model, os.path.join(tmp, "cumulative.png"), [0.5, 0.9]),
            plot_loadings(model, os.path.join(tmp, "loadings.png"), top_m=3),
        ]
        for path in paths:
            assert is_png(path), path


def test_figure_format_follows_suffix():
    with tempfile.TemporaryDirectory() as tmp:
        path = plot_scree(fitted_pca(), os.path.join(tmp, "sub", "scree.svg"))
        with open(path, encoding="utf-8") as f:
            assert "<svg" in f.read()


def test_loadings_top_clamped_to_dimension():
    with tempfile.TemporaryDirectory() as tmp:
        assert is_png(plot_loadings(fitted_pca(), os.path.join(tmp, "loadings.png"), top_m=10))


if __name__ == "__main__":
    tests = [v for k, v in globals().items() if k.startswith("test_")]
    passed = 0
    for t in tests:
        try:
            t()
            print(f"  ✓ {t.__name__}")
            passed += 1
        except AssertionError as e:
            print(f"  ✗ {t.__name__}: {e}")
        except Exception as e:
            print(f"  ✗ {t.__name__}: {e}")
    print(f"\n{passed}/{len(tests)} tests passed")
