"""Locating the C compiler and runtime header; compiling and running units."""

from __future__ import annotations

import json
import os
import shutil
import subprocess
from pathlib import Path

from .emit_c import EmittedUnit
from .errors import DslRuntimeError, UnsupportedFeatureError, UsageError


def find_cc() -> str | None:
    cc = os.environ.get("SIMPL_CC")
    if cc:
        return cc if shutil.which(cc) else None
    for candidate in ("cc", "gcc", "clang"):
        if shutil.which(candidate):
            return candidate
    return None


def find_rt_include() -> Path | None:
    env = os.environ.get("SIMPL_RT_INCLUDE")
    if env:
        p = Path(env)
        return p if (p / "simpl_rt.h").exists() else None
    here = Path(__file__).resolve()
    for base in [here.parent, *here.parents]:
        candidate = base / "cbaseline" / "include"
        if (candidate / "simpl_rt.h").exists():
            return candidate
    return None


def toolchain_available() -> bool:
    return find_cc() is not None and find_rt_include() is not None


def compile_unit(unit: EmittedUnit, outdir: str | Path, cc: str | None = None,
                 cflags: tuple = ("-std=c99", "-O2", "-Wall", "-Wextra")) -> Path:
    """Write the unit and compile it warning-free; returns the executable path."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    cc = cc or find_cc()
    if cc is None:
        raise UsageError("no C compiler found (set SIMPL_CC or install cc)")
    include = find_rt_include()
    if include is None:
        raise UsageError("simpl_rt.h not found (set SIMPL_RT_INCLUDE or build the "
                         "C baseline component)")
    src = outdir / f"{unit.name}.c"
    src.write_text(unit.code)
    exe = outdir / unit.name
    cmd = [cc, *cflags, "-I", str(include), "-o", str(exe), str(src), "-lm"]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise UnsupportedFeatureError(
            f"emitted C failed to compile:\n{proc.stderr.strip()}")
    if proc.stderr.strip():
        raise UnsupportedFeatureError(
            f"emitted C produced warnings under {' '.join(cflags)}:\n{proc.stderr.strip()}")
    unit.manifest["cc_command"] = " ".join(cmd)
    manifest = outdir / f"{unit.name}.manifest.json"
    manifest.write_text(json.dumps(unit.manifest, indent=2) + "\n")
    return exe


def run_compiled(exe: str | Path, seed: int, n: int, burn: int | None = None,
                 timeout: float = 600.0) -> dict:
    cmd = [str(exe), str(seed), str(n)]
    if burn is not None:
        cmd.append(str(burn))
    proc = subprocess.run(cmd, capture_output=True, text=True, timeout=timeout)
    if proc.returncode != 0:
        raise DslRuntimeError(
            f"compiled program failed (exit {proc.returncode}): {proc.stderr.strip()}")
    return json.loads(proc.stdout.strip().splitlines()[-1])


def rng_dump(exe: str | Path, seed: int, k: int) -> dict:
    proc = subprocess.run([str(exe), "rngdump", str(seed), str(k)],
                          capture_output=True, text=True)
    if proc.returncode != 0:
        raise DslRuntimeError(f"rngdump failed: {proc.stderr.strip()}")
    return json.loads(proc.stdout.strip())
