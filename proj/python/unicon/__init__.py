"""Conditional multi-age segmentation (ConSA + HDSC) python facade.

The heavy lifting lives in the compiled ``_unicon`` module; this package
re-exports its surface so ``import unicon`` works both from an installed
wheel and from a plain CMake build directory (add ``build/bindings`` to
``PYTHONPATH`` for the latter).
"""

try:
    from ._unicon import (  # type: ignore[attr-defined]
        SegModel,
        UniconError,
        bezier_intensity,
        ce_loss,
        dense_coords,
        dice_loss,
        dice_score,
        generate_cohort,
        manifest_summary,
        relative_center,
        run_cli,
        segmentation_loss,
        tile_plan,
    )
except ImportError:  # pragma: no cover - build-tree layout
    from _unicon import (  # type: ignore[no-redef]
        SegModel,
        UniconError,
        bezier_intensity,
        ce_loss,
        dense_coords,
        dice_loss,
        dice_score,
        generate_cohort,
        manifest_summary,
        relative_center,
        run_cli,
        segmentation_loss,
        tile_plan,
    )

__all__ = [
    "SegModel",
    "UniconError",
    "bezier_intensity",
    "ce_loss",
    "dense_coords",
    "dice_loss",
    "dice_score",
    "generate_cohort",
    "manifest_summary",
    "relative_center",
    "run_cli",
    "segmentation_loss",
    "tile_plan",
]
