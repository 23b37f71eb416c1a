import logging
from pathlib import Path
from typing import Callable


logger = logging.getLogger(__name__)

def get_data_folder(subfolder: str = "results", root: Path | None = None) -> Path:
    """
    Returns the absolute path to a project output subfolder, creating it if necessary.

    Calibration tables, simulation tables and analysis reports are written
    here when no explicit output path is given.

    Args:
        subfolder (str): Name of the subfolder (e.g., "calibration", "simulation").
        root (Path | None): Base folder; defaults to ~/fdp-bounds/data.

    Returns:
        Path: Absolute Path object pointing to the requested folder.
    """
    project_root = root if root is not None else Path.home() / "fdp-bounds" / "data"
    folder = Path(project_root).absolute() / subfolder
    folder.mkdir(parents=True, exist_ok=True)

    logger.info("Data folder path: %s", folder)

    return folder

def process_step(path: Path, method: Callable[[], None], step_name: str, overwrite: bool) -> None:
    """Run `method` unless `path` exists and overwrite is False."""
    if path.exists() and not overwrite:
        logger.info("%s already exists: skipping", step_name)
    else:
        method()
