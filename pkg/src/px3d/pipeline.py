"""End-to-end compression: scene bundle in, proxy token sequence out.

Stage order: flatten to patch triplets, group by label, optionally fuse
identifier embeddings into referenced groups, apportion the token budget,
cluster each group, BFS-order the groups spatially, assemble, and
optionally apply positional encoding.

Per-frame flattening and per-group clustering may run on a thread pool;
results are merged in deterministic frame/label order, so output bytes do
not depend on the thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .cluster import cluster_group
from .containers import ProxySequence, SceneBundle, read_scene, write_tokens
from .errors import UnknownLabel, UsageError
from .groups import allocate_proxies, group_by_label
from .patchgrid import flatten_scene
from .posenc import VERT_AXIS, PosEncParams, encode_sequence
from .refembed import EmbeddingRegistry, inject_identifier
from .serialize import assemble_sequence, bfs_order, chain_graph, group_centroids


@dataclass
class CompressConfig:
    tokens: int = 450
    min_proxies: int = 1
    per_label_override: dict[int, int] = field(default_factory=dict)
    edges: int = 3
    posenc: bool = False
    refer: dict[int, int] = field(default_factory=dict)  # label -> identifier id
    seed: int = 0
    threads: int = 1
    patch_size: int | None = None

    def validate(self) -> None:
        if self.tokens < 1:
            raise UsageError(f"tokens must be >= 1, got {self.tokens}")
        if self.min_proxies < 1:
            raise UsageError(f"min_proxies must be >= 1, got {self.min_proxies}")
        if self.edges < 1:
            raise UsageError(f"edges must be >= 1, got {self.edges}")
        if self.threads < 1:
            raise UsageError(f"threads must be >= 1, got {self.threads}")
        for label, count in self.per_label_override.items():
            if count < 1:
                raise UsageError(f"override for label {label} must be >= 1")


def compress_bundle(bundle: SceneBundle, config: CompressConfig) -> ProxySequence:
    config.validate()
    triplets = flatten_scene(bundle, config.patch_size, threads=config.threads)
    groups = group_by_label(triplets)
    present = {g.label for g in groups}

    for label in sorted(config.per_label_override):
        if label not in present:
            raise UnknownLabel(f"override references label {label}, "
                               f"not present in scene")
    if config.refer:
        for label in sorted(config.refer):
            if label not in present:
                raise UnknownLabel(f"refer references label {label}, "
                                   f"not present in scene")
        registry = EmbeddingRegistry(seed=config.seed, channels=bundle.channels)
        for i, g in enumerate(groups):
            if g.label in config.refer:
                groups[i] = inject_identifier(g, config.refer[g.label], registry)

    plan = allocate_proxies([g.size for g in groups], config.tokens,
                            k_min=config.min_proxies,
                            labels=[g.label for g in groups],
                            overrides=config.per_label_override)
    for g, entry in zip(groups, plan.entries):
        g.allocated = entry.allocated

    if config.threads > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            clustered = list(pool.map(cluster_group, groups))
    else:
        clustered = [cluster_group(g) for g in groups]
    proxies_by_label = {g.label: p for g, p in zip(groups, clustered)}

    # BFS over the spanning chain: denser graphs (kNN at any k) measurably
    # break the per-scene locality contract, see serialize module docs
    centroids = group_centroids(proxies_by_label)
    order = bfs_order(chain_graph(centroids))

    meta = {
        "requested_k": config.tokens,
        "min_proxies": config.min_proxies,
        "seed": config.seed,
        "posenc": False,
        "edges": config.edges,
    }
    if config.per_label_override:
        meta["overrides"] = {str(k): v for k, v in
                             sorted(config.per_label_override.items())}
    if config.refer:
        meta["refer"] = {str(k): v for k, v in sorted(config.refer.items())}

    seq = assemble_sequence(order, proxies_by_label, meta,
                            channels=bundle.channels)
    if config.posenc:
        params = PosEncParams.init(bundle.channels, seed=config.seed)
        coords = seq.coords.astype("float64")
        z_min = float(coords[:, VERT_AXIS].min()) if seq.k else 0.0
        seq = encode_sequence(seq, params, z_min)
        seq.meta["posenc"] = {
            "seed": config.seed,
            "z_min": z_min,
            "vert_bin": params.vert_bin,
            "vert_max_index": params.vert_max_index,
            "rope_base": params.rope_base,
            "fourier_dim": params.fourier_dim,
        }
    return seq


def compress_file(in_path, out_path, config: CompressConfig) -> ProxySequence:
    seq = compress_bundle(read_scene(in_path), config)
    write_tokens(seq, out_path)
    return seq
