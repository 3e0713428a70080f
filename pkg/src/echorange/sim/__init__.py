"""Shoebox-room scene synthesis with frame-accurate distance labels."""

from .dataset import (
    DatasetConfig,
    Manifest,
    ManifestRecord,
    load_manifest,
    make_dataset,
    room_distance_bounds,
)
from .room import (
    SPEED_OF_SOUND,
    TETRA_RADIUS,
    ArrayGeometry,
    RoomSpec,
    free_field_room,
    image_source_ir,
    image_sources,
)
from .scene import SceneAnnotation, Trajectory, annotate_distance, render_scene

__all__ = [
    "ArrayGeometry",
    "DatasetConfig",
    "Manifest",
    "ManifestRecord",
    "RoomSpec",
    "SPEED_OF_SOUND",
    "SceneAnnotation",
    "TETRA_RADIUS",
    "Trajectory",
    "annotate_distance",
    "free_field_room",
    "image_source_ir",
    "image_sources",
    "load_manifest",
    "make_dataset",
    "render_scene",
    "room_distance_bounds",
]
