"""Checkpoint serialization for the trainable modules.

Layout (little-endian): magic ``VDIM``, u32 version=1, u32 d_proj, u32 C,
then the upsampling and downsampler tensors in their canonical declaration
order (see :func:`hiwin.vdim.trainable_arrays`), each stored as rank (u32),
dims (u32 each), float32 payload.  An attention section may follow under the
tag ``HATT``: u32 version=1, u32 N, u32 heads, u32 C, then queries, level
embeddings, and the q/k/v/output projection weights and biases with the same
tensor encoding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .formats import DataFormatError, read_array, read_u32, write_array, write_u32
from .vdim import DownsamplerParams, LevelDown, LevelKernel, VdimParams
from .window_attn import AttnParams

__all__ = ["Checkpoint", "load_checkpoint", "save_checkpoint"]

VDIM_MAGIC = b"VDIM"
HATT_MAGIC = b"HATT"
VERSION = 1

_ATTN_FIELDS = ("queries", "level_emb", "wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")


@dataclass
class Checkpoint:
    vdim: VdimParams
    down: DownsamplerParams
    attn: AttnParams | None
    channels: int
    heads: int = 4


def save_checkpoint(
    path,
    vdim: VdimParams,
    down: DownsamplerParams,
    attn: AttnParams | None = None,
    heads: int = 4,
) -> None:
    with open(path, "wb") as f:
        f.write(VDIM_MAGIC)
        write_u32(f, VERSION)
        write_u32(f, vdim.d_proj)
        write_u32(f, down.channels)
        for lk in vdim.levels:
            for arr in (lk.proj_w, lk.proj_b, lk.log_sigma_dist, lk.log_sigma_sim):
                write_array(f, arr)
        for ld in down.levels:
            for arr in (ld.gamma, ld.beta, ld.sal_w, ld.sal_b):
                write_array(f, arr)
        if attn is not None:
            f.write(HATT_MAGIC)
            write_u32(f, VERSION)
            write_u32(f, attn.queries.shape[0])
            write_u32(f, heads)
            write_u32(f, attn.queries.shape[2])
            for name in _ATTN_FIELDS:
                write_array(f, getattr(attn, name))


def load_checkpoint(path, levels: int = 2) -> Checkpoint:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != VDIM_MAGIC:
            raise DataFormatError(f"bad checkpoint magic {magic!r}")
        version = read_u32(f, "version")
        if version != VERSION:
            raise DataFormatError(f"unsupported checkpoint version {version}")
        d_proj = read_u32(f, "d_proj")
        channels = read_u32(f, "channels")
        kernels = []
        for i in range(levels):
            proj_w = read_array(f, f"upsample{i + 1}.proj_w").astype(np.float64)
            proj_b = read_array(f, f"upsample{i + 1}.proj_b").astype(np.float64)
            sd = read_array(f, f"upsample{i + 1}.log_sigma_dist").astype(np.float64)
            ss = read_array(f, f"upsample{i + 1}.log_sigma_sim").astype(np.float64)
            if proj_w.shape != (3, d_proj) or proj_b.shape != (d_proj,):
                raise DataFormatError("upsampling kernel shape mismatch")
            kernels.append(
                LevelKernel(
                    proj_w=proj_w,
                    proj_b=proj_b,
                    log_sigma_dist=sd.reshape(()),
                    log_sigma_sim=ss.reshape(()),
                )
            )
        downs = []
        for i in range(levels):
            gamma = read_array(f, f"down{i + 1}.gamma").astype(np.float64)
            beta = read_array(f, f"down{i + 1}.beta").astype(np.float64)
            sal_w = read_array(f, f"down{i + 1}.sal_w").astype(np.float64)
            sal_b = read_array(f, f"down{i + 1}.sal_b").astype(np.float64)
            if gamma.shape != (channels,):
                raise DataFormatError("downsampler shape mismatch")
            downs.append(
                LevelDown(gamma=gamma, beta=beta, sal_w=sal_w, sal_b=sal_b.reshape(()))
            )
        vdim = VdimParams(levels=kernels)
        down = DownsamplerParams(levels=downs)

        attn = None
        heads = 4
        tag = f.read(4)
        if tag == HATT_MAGIC:
            aversion = read_u32(f, "attention version")
            if aversion != VERSION:
                raise DataFormatError(f"unsupported attention section version {aversion}")
            read_u32(f, "N")
            heads = read_u32(f, "heads")
            read_u32(f, "attention channels")
            fields = {
                name: read_array(f, name).astype(np.float64) for name in _ATTN_FIELDS
            }
            attn = AttnParams(**fields)
        elif tag != b"":
            raise DataFormatError(f"unexpected trailing section {tag!r}")
    return Checkpoint(vdim=vdim, down=down, attn=attn, channels=channels, heads=heads)
