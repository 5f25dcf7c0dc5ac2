"""px3d: compile per-frame visual-encoder artifacts into compact,
spatially serialized 3D proxy token sequences."""

from . import errors
from .cluster import Proxy, aggregate_proxy, assign_members, cluster_group, fps_centers
from .containers import (
    FrameRecord,
    Granularity,
    GroupEntry,
    ProxySequence,
    SceneBundle,
    read_scene,
    read_tokens,
    write_scene,
    write_tokens,
)
from .groups import AllocationPlan, SemanticGroup, allocate_proxies, group_by_label
from .patchgrid import PatchTriplet, dominant_label, flatten_scene, patch_point
from .pipeline import CompressConfig, compress_bundle, compress_file
from .posenc import (
    AlignConfig,
    EncodedProxy,
    PosEncParams,
    encode,
    encode_sequence,
    fourier_forward,
    fourier_grad,
    rope_rotate,
    train_coordinate_alignment,
    vert_index,
)
from .refembed import (
    EmbeddingRegistry,
    LossInput,
    fuse,
    inject_identifier,
    nll_loss,
    object_token,
    parse_object_token,
    read_logits,
    write_logits,
)
from .serialize import (
    GroupGraph,
    assemble_sequence,
    bfs_order,
    build_adjacency,
    chain_graph,
    group_centroids,
)
from .synth import GroundTruth, SceneSpec, generate_scene, perturb

__version__ = "0.1.0"
