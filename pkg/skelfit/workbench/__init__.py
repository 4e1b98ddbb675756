"""File formats, run settings and observation directories."""

from .observations import ObservationSequence
from .codecs import (
    read_camera,
    read_embeddings,
    read_flo,
    read_manifest,
    read_pgm,
    read_points,
    write_camera,
    write_embeddings,
    write_flo,
    write_obj,
    write_pgm,
)
from .shape_file import ShapeFile, load_poses, load_shape, save_poses, save_shape, shapes_equal
from .settings import Settings, load_settings, settings_from_dict
from .synth import load_observations, render_observations, synth_observations, write_observations
