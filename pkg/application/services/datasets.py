from typing import Dict, Optional, Tuple

from pydantic import ValidationError

from application.dto.training_dto import DatasetSpec, SyntheticSpec
from domain.exceptions import ContractViolationError
from domain.value_objects.dataset import Dataset

MNIST_VALIDATION_SIZE = 10_000
SYNTHETIC_KEYS = {
    "n": "n",
    "dim": "dim",
    "latent": "latent_dim",
    "latent_dim": "latent_dim",
    "seed": "seed",
    "identity": "identity_mixing",
}


def parse_dataset_spec(text: str, default_dir: Optional[str] = None) -> DatasetSpec:
    """Parse ``mnist[:DIR]`` or ``synthetic:n=..,dim=..,latent=..,seed=..``."""
    kind, _, rest = text.strip().partition(":")
    if kind == "mnist":
        return DatasetSpec(kind="mnist", path=rest or default_dir)
    if kind != "synthetic":
        raise ContractViolationError(
            f"Unknown dataset {kind!r}; expected mnist:DIR or synthetic:SPEC"
        )

    fields: Dict[str, object] = {}
    for item in filter(None, (part.strip() for part in rest.split(","))):
        key, sep, value = item.partition("=")
        if key not in SYNTHETIC_KEYS:
            raise ContractViolationError(f"Unknown synthetic dataset key {key!r}")
        # a bare flag such as "identity" means true
        fields[SYNTHETIC_KEYS[key]] = value if sep else True
    try:
        return DatasetSpec(kind="synthetic", synthetic=SyntheticSpec(**fields))
    except ValidationError as e:
        raise ContractViolationError(f"Invalid synthetic dataset: {e}") from e


def split_validation(
    dataset: Dataset, size: Optional[int] = None
) -> Tuple[Dataset, Dataset]:
    """Hold out the tail of the dataset.

    Without an explicit size the last 10,000 examples are held out when the
    dataset is MNIST-sized, otherwise the last fifth.
    """
    if size is None:
        if dataset.size >= 5 * MNIST_VALIDATION_SIZE:
            size = MNIST_VALIDATION_SIZE
        else:
            size = dataset.size // 5
    if not 1 <= size < dataset.size:
        raise ContractViolationError(
            f"Cannot hold out {size} of {dataset.size} examples"
        )
    cut = dataset.size - size
    return dataset.take(slice(0, cut)), dataset.take(slice(cut, dataset.size))
