from .scene import CATEGORIES, SceneObject, SceneSpec, generate_scene
from .render import camera_ring, render_views, trace_rays
from .queries import QUERY_VOCAB, RELATIONS, Query, make_query, matching_objects, verify_query
from .proposals import jitter_proposals, proposals_from_scene
from .episodes import DataConfig, GenerationSummary, GroundingEpisode, build_episode, episode_proposals, generate_episodes
from .dataset import load_dataset, read_dataset, write_dataset

__all__ = [
    "CATEGORIES",
    "SceneObject",
    "SceneSpec",
    "generate_scene",
    "camera_ring",
    "render_views",
    "trace_rays",
    "QUERY_VOCAB",
    "RELATIONS",
    "Query",
    "make_query",
    "matching_objects",
    "verify_query",
    "jitter_proposals",
    "proposals_from_scene",
    "DataConfig",
    "GenerationSummary",
    "GroundingEpisode",
    "build_episode",
    "episode_proposals",
    "generate_episodes",
    "load_dataset",
    "read_dataset",
    "write_dataset",
]
