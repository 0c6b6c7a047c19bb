# lut_retouch/core/dataset.py

"""Loading images and paired datasets from directories."""

import logging
import os
from dataclasses import dataclass
from typing import List, Tuple

from .errors import DatasetError, EmptyDataset, ImageError, IoFailure
from .imaging import ImageU8, load_image
from .utils import list_images

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ImagePair:
    name: str
    source: ImageU8
    target: ImageU8


def _require_dir(path: str, role: str) -> None:
    if not os.path.isdir(path):
        raise DatasetError(f"{role} directory '{path}' does not exist.")


def load_pairs(input_dir: str, target_dir: str) -> List[ImagePair]:
    """
    Loads identically named images from two directories.

    Files present in only one directory are skipped with a warning.

    Raises:
        DatasetError: If a directory is missing, a file cannot be decoded or
            a pair differs in size.
        EmptyDataset: If no names are shared.
    """
    _require_dir(input_dir, "Input")
    _require_dir(target_dir, "Target")
    inputs = list_images(input_dir)
    targets = set(list_images(target_dir))
    unmatched = [name for name in inputs if name not in targets]
    if unmatched:
        logger.warning(
            "%d input image(s) have no target in '%s' and are skipped.", len(unmatched), target_dir
        )

    pairs = []
    for name in inputs:
        if name not in targets:
            continue
        try:
            source = load_image(os.path.join(input_dir, name))
            target = load_image(os.path.join(target_dir, name))
        except (ImageError, IoFailure) as e:
            raise DatasetError(f"Cannot load pair '{name}': {e}") from e
        if (source.width, source.height) != (target.width, target.height):
            raise DatasetError(
                f"Pair '{name}' differs in size: {source.width}x{source.height} "
                f"vs {target.width}x{target.height}."
            )
        pairs.append(ImagePair(name, source, target))
    if not pairs:
        raise EmptyDataset(f"No paired images found in '{input_dir}' and '{target_dir}'.")
    logger.info("Loaded %d pairs from '%s'.", len(pairs), input_dir)
    return pairs


def load_images(directory: str, skip_unreadable: bool = False) -> List[Tuple[str, ImageU8]]:
    """
    Loads every supported image in a directory, sorted by name.

    Args:
        directory: Folder to scan.
        skip_unreadable: Log and skip files that fail to decode instead of raising.

    Raises:
        DatasetError: If the directory is missing or (unless skipping) a file fails.
        EmptyDataset: If no image could be loaded.
    """
    _require_dir(directory, "Image")
    images = []
    for name in list_images(directory):
        try:
            images.append((name, load_image(os.path.join(directory, name))))
        except (ImageError, IoFailure) as e:
            if not skip_unreadable:
                raise DatasetError(f"Cannot load '{name}': {e}") from e
            logger.warning("Skipping '%s': %s", name, e)
    if not images:
        raise EmptyDataset(f"No readable images in '{directory}'.")
    return images
