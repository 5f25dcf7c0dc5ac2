"""Bindings parity acceptance: array-surface writes and compression agree
bit-exactly with the CLI on 20 random scenes."""

import subprocess
import sys

import numpy as np

import px3d_arrays as pxa
from px3d.containers import read_tokens, write_scene
from px3d.synth import SceneSpec, generate_scene


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "px3d", *args],
                          capture_output=True, text=True)


def report(name, ok, detail=""):
    line = f"{'PASS' if ok else 'FAIL'}: {name}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


def test_bindings_parity_20_scenes(tmp_path):
    rng = np.random.default_rng(100)
    write_mismatches = compress_mismatches = 0
    for seed in range(20):
        spec = SceneSpec(seed=seed, frames=int(rng.integers(1, 4)),
                         patch_h=6, patch_w=8, channels=8,
                         objects=int(rng.integers(2, 6)))
        bundle, _ = generate_scene(spec)
        core_path = tmp_path / f"core{seed}.px3d"
        bind_path = tmp_path / f"bind{seed}.px3d"
        write_scene(bundle, core_path)
        pxa.write_scene_from_arrays(
            bind_path,
            features=np.stack([f.features for f in bundle.frames]),
            points=np.stack([f.points for f in bundle.frames]),
            labels=np.stack([f.labels for f in bundle.frames]),
            height=bundle.height, width=bundle.width)
        if core_path.read_bytes() != bind_path.read_bytes():
            write_mismatches += 1
            continue

        tokens = int(rng.integers(8, 20))
        cli_out = tmp_path / f"cli{seed}.pxtk"
        r = run_cli("compress", "--in", str(core_path), "--out", str(cli_out),
                    "--tokens", str(tokens), "--seed", str(seed), "--posenc")
        assert r.returncode == 0, r.stderr
        via_cli = read_tokens(cli_out)
        via_bindings = pxa.compress(bind_path, tokens=tokens, seed=seed,
                                    posenc=True)
        if not (via_cli.tokens.tobytes() == via_bindings.tokens.tobytes()
                and via_cli.coords.tobytes() == via_bindings.coords.tobytes()
                and np.array_equal(via_cli.group_labels,
                                   via_bindings.group_labels)
                and via_cli.meta == via_bindings.meta):
            compress_mismatches += 1
    report("bindings/CLI parity on 20 random scenes",
           write_mismatches == 0 and compress_mismatches == 0,
           f"{write_mismatches} write, {compress_mismatches} compress mismatches")
