"""PNG artifacts: image grids (original / projected / noisy) and toy-data scatter plots."""

from pathlib import Path
from typing import Dict, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from grpcoll.schemas.dataset import Dataset  # noqa: E402
from grpcoll.services.nn.network import image_side  # noqa: E402

PathLike = Union[str, Path]


def as_image(vector: np.ndarray) -> np.ndarray:
    """Zero-pad a vector to the next square and reshape it, as the CNN does."""
    vector = np.asarray(vector, dtype=np.float64)
    side = image_side(vector.size)
    return np.pad(vector, (0, side * side - vector.size)).reshape(side, side)


def save_image_grid(rows: Dict[str, np.ndarray], outpath: PathLike, columns: int = 8) -> Path:
    """
    One row of images per named block of vectors.

    Every image is scaled to its own min/max, so projected and noisy images
    stay visible next to the originals.
    """
    names = list(rows)
    count = min(columns, min(len(rows[n]) for n in names))
    fig, axes = plt.subplots(len(names), count, figsize=(1.4 * count, 1.6 * len(names)), squeeze=False)
    for r, name in enumerate(names):
        for c in range(count):
            ax = axes[r][c]
            ax.imshow(as_image(rows[name][c]), cmap=plt.cm.gray)
            ax.set_xticks([])
            ax.set_yticks([])
        axes[r][0].set_ylabel(name, fontsize=8)
    fig.tight_layout()
    outpath = Path(outpath)
    outpath.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(outpath, dpi=150)
    plt.close(fig)
    return outpath


def save_scatter(
    datasets: Sequence[Dataset], titles: Sequence[str], outpath: PathLike, dims: Sequence[int] = (0, 1)
) -> Path:
    """Side-by-side scatter plots of two coordinates, colored by class."""
    fig, axes = plt.subplots(1, len(datasets), figsize=(3.2 * len(datasets), 3.2), squeeze=False)
    for ax, ds, title in zip(axes[0], datasets, titles):
        x = ds.vectors[:, dims[0]]
        y = ds.vectors[:, dims[1]] if ds.dimension > dims[1] else np.zeros_like(x)
        ax.scatter(x, y, c=ds.labels, cmap="coolwarm", s=4, alpha=0.7)
        ax.set_title(title, fontsize=9)
        ax.grid(True, linestyle="--", alpha=0.6)
    fig.tight_layout()
    outpath = Path(outpath)
    outpath.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(outpath, dpi=150)
    plt.close(fig)
    return outpath
