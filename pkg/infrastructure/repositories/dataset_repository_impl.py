import gzip
import logging
import struct
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit

from domain.exceptions import ContractViolationError, DatasetFormatError
from domain.repositories.dataset_repository import DatasetRepository
from domain.value_objects.dataset import Dataset
from infrastructure.config.harness import harness_config

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
IMAGES_HEADER = struct.Struct(">IIII")
LABELS_HEADER = struct.Struct(">II")
IMAGE_FILES = ("train-images-idx3-ubyte", "train-images.idx3-ubyte")
LABEL_FILES = ("train-labels-idx1-ubyte", "train-labels.idx1-ubyte")


def _read_bytes(path: Path) -> bytes:
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def _check_payload(data: bytes, expected: int, what: str) -> None:
    if len(data) < expected:
        raise DatasetFormatError(
            f"Truncated {what}: header announces {expected} bytes, file has "
            f"{len(data)}",
            offset=len(data),
        )
    if len(data) > expected:
        raise DatasetFormatError(
            f"Trailing data after {what}: header announces {expected} bytes, "
            f"file has {len(data)}",
            offset=expected,
        )


def read_idx_images(data: bytes) -> np.ndarray:
    """Images as rows of pixels scaled to [0, 1]."""
    if len(data) < IMAGES_HEADER.size:
        raise DatasetFormatError("Truncated IDX image header", offset=len(data))
    magic, count, rows, cols = IMAGES_HEADER.unpack_from(data, 0)
    if magic != IMAGES_MAGIC:
        raise DatasetFormatError(f"Bad IDX image magic 0x{magic:08x}", offset=0)
    _check_payload(data, IMAGES_HEADER.size + count * rows * cols, "IDX images")
    pixels = np.frombuffer(data, dtype=np.uint8, offset=IMAGES_HEADER.size)
    return pixels.reshape(count, rows * cols).astype(np.float64) / 255.0


def read_idx_labels(data: bytes) -> np.ndarray:
    if len(data) < LABELS_HEADER.size:
        raise DatasetFormatError("Truncated IDX label header", offset=len(data))
    magic, count = LABELS_HEADER.unpack_from(data, 0)
    if magic != LABELS_MAGIC:
        raise DatasetFormatError(f"Bad IDX label magic 0x{magic:08x}", offset=0)
    _check_payload(data, LABELS_HEADER.size + count, "IDX labels")
    return np.frombuffer(data, dtype=np.uint8, offset=LABELS_HEADER.size).astype(
        np.int64
    )


def load_mnist_idx(images_path: str, labels_path: Optional[str] = None) -> Dataset:
    images = read_idx_images(_read_bytes(Path(images_path)))
    labels = None
    if labels_path is not None:
        labels = read_idx_labels(_read_bytes(Path(labels_path)))
        if labels.shape[0] != images.shape[0]:
            # the count field follows the magic number
            raise DatasetFormatError(
                f"{labels.shape[0]} labels for {images.shape[0]} images", offset=4
            )
    return Dataset(inputs=images, labels=labels, name="mnist")


def generate_synthetic(
    n: int, dim: int, latent_dim: int, seed: int, identity_mixing: bool = False
) -> Dataset:
    """sigmoid(latents @ mixing) with Gaussian latents of dimension latent_dim."""
    if not 1 <= latent_dim <= dim or n < 1:
        raise ContractViolationError(
            f"Need n >= 1 and 1 <= latent_dim <= dim, got n={n}, "
            f"latent_dim={latent_dim}, dim={dim}"
        )
    if identity_mixing and latent_dim != dim:
        raise ContractViolationError("Identity mixing needs latent_dim == dim")
    rng = np.random.default_rng(seed)
    latents = rng.standard_normal((n, latent_dim))
    if identity_mixing:
        mixing = np.eye(dim)
    else:
        mixing = rng.standard_normal((latent_dim, dim)) / np.sqrt(latent_dim)
    return Dataset(inputs=expit(latents @ mixing), name="synthetic")


def _find(directory: Path, names: Sequence[str]) -> Optional[Path]:
    for name in names:
        for candidate in (directory / name, directory / f"{name}.gz"):
            if candidate.is_file():
                return candidate
    return None


class FileDatasetRepository(DatasetRepository):
    def __init__(self, data_dir: Optional[str] = None):
        self.data_dir = data_dir or harness_config.data_dir

    def load_mnist(self, directory: Optional[str] = None) -> Dataset:
        root = Path(directory or self.data_dir)
        images = _find(root, IMAGE_FILES)
        if images is None:
            raise ContractViolationError(f"No MNIST training images found in {root}")
        labels = _find(root, LABEL_FILES)
        dataset = load_mnist_idx(str(images), None if labels is None else str(labels))
        logger.info("Read %d MNIST images from %s", dataset.size, images)
        return dataset

    def generate_synthetic(
        self,
        n: int,
        dim: int,
        latent_dim: int,
        seed: int,
        identity_mixing: bool = False,
    ) -> Dataset:
        return generate_synthetic(n, dim, latent_dim, seed, identity_mixing)
