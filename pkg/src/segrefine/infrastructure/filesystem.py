"""
Filesystem abstraction layer using PyFilesystem2.

Scene directories, datasets and run outputs are all read and written through
an ``FS`` handle so tests can swap in an in-memory filesystem.
"""

from __future__ import annotations

import warnings
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator

warnings.filterwarnings(
    "ignore",
    message="pkg_resources is deprecated as an API",
    category=UserWarning,
    module="pkg_resources",
)

warnings.filterwarnings(
    "ignore",
    message="Deprecated call to `pkg_resources.declare_namespace",
    category=DeprecationWarning,
    module="pkg_resources",
)

from fs.base import FS
from fs.errors import CreateFailed
from fs.memoryfs import MemoryFS
from fs.osfs import OSFS

from segrefine.errors import MissingFile

FSLike = str | Path | FS


def create_filesystem(fs_url: str, *, create: bool = True) -> FS:
    """
    Create a filesystem instance based on the provided URL.

    Args:
         fs_url: Filesystem URL. Supported formats:
             - Local path: "/path/to/directory"
             - Memory filesystem: "mem://" (for testing)
         create: create the local directory when it does not exist

    Returns:
        FS: A PyFilesystem2 filesystem instance

    Raises:
        ValueError: For invalid URLs
        MissingFile: When ``create`` is False and the directory is absent
    """
    if not fs_url:
        raise ValueError("Filesystem URL cannot be empty")

    if fs_url.startswith("mem://"):
        return MemoryFS()
    try:
        return OSFS(fs_url, create=create)
    except CreateFailed as exc:
        raise MissingFile(fs_url) from exc


@contextmanager
def open_directory(target: FSLike, *, create: bool = False) -> Iterator[FS]:
    """Yield an FS for ``target``; handles passed in by the caller stay open."""
    if isinstance(target, FS):
        yield target
        return
    handle = create_filesystem(str(target), create=create)
    try:
        yield handle
    finally:
        handle.close()


def list_subdirectories(target: FSLike) -> list[str]:
    """Sorted names of the immediate subdirectories of ``target``."""
    with open_directory(target) as handle:
        return sorted(info.name for info in handle.scandir("/") if info.is_dir)
