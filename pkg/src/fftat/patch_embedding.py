"""Image -> token sequence: patch split, linear projection, positions, class token."""

from __future__ import annotations

import numpy as np

from . import numerics as nx
from .numerics import Tensor


class ConfigError(ValueError):
    pass


def num_patches(image_size: int, patch_size: int) -> int:
    if patch_size <= 0 or image_size % patch_size:
        raise ConfigError(f"image side {image_size} is not divisible by patch side {patch_size}")
    return (image_size // patch_size) ** 2


def extract_patches(images: np.ndarray, patch_size: int) -> np.ndarray:
    """(B, C, H, W) -> (B, P, C*p*p), patches in row-major grid order."""
    if images.ndim == 3:
        images = images[None]
    b, c, h, w = images.shape
    if h != w:
        raise ConfigError(f"images must be square, got {h}x{w}")
    num_patches(h, patch_size)
    g = h // patch_size
    x = images.reshape(b, c, g, patch_size, g, patch_size)
    return x.transpose(0, 2, 4, 1, 3, 5).reshape(b, g * g, c * patch_size * patch_size)


def assemble_patches(patches: np.ndarray, channels: int, patch_size: int) -> np.ndarray:
    """Inverse of :func:`extract_patches`."""
    b, n, _ = patches.shape
    g = int(round(np.sqrt(n)))
    x = patches.reshape(b, g, g, channels, patch_size, patch_size)
    return x.transpose(0, 3, 1, 4, 2, 5).reshape(b, channels, g * patch_size, g * patch_size)


def init_embedding(rng: np.random.Generator, channels: int, image_size: int, patch_size: int,
                   dim: int, init_weight) -> dict[str, Tensor]:
    n = num_patches(image_size, patch_size)
    return {
        "embed.w": Tensor(init_weight(rng, (channels * patch_size * patch_size, dim))),
        "embed.b": Tensor(np.zeros(dim)),
        "embed.pos": Tensor(rng.normal(0.0, 0.02, size=(1 + n, dim))),
        "embed.cls": Tensor(np.zeros(dim)),
    }


def embed_images(images: np.ndarray, params: dict[str, Tensor], patch_size: int) -> Tensor:
    """Batch of images (B, C, H, W) -> tokens (B, 1+P, d); token 0 is the class token."""
    patches = Tensor(extract_patches(np.asarray(images), patch_size))
    proj = patches @ params["embed.w"] + params["embed.b"]
    b, d = proj.shape[0], proj.shape[-1]
    cls = nx.add(Tensor(np.zeros((b, 1, d))), params["embed.cls"])
    return nx.concat([cls, proj], axis=1) + params["embed.pos"]


def embed_image(image: np.ndarray, params: dict[str, Tensor], patch_size: int) -> Tensor:
    """Single image (C, H, W) -> tokens (1+P, d)."""
    return embed_images(np.asarray(image)[None], params, patch_size)[0]
