"""VGG16 activation/gradient pair extraction with partially guided backprop.

The forward pass captures activations at a pooling-layer output (block 5 by
default, shape 512x7x7 for 224x224 inputs). The backward pass is seeded at the
class-score layer with the full softmax probability vector rather than a
one-hot class, so the gradient reflects every object the network responded to.
While that gradient propagates down the network, negative values are zeroed
only where the signal crosses a max-pooling layer between convolution blocks;
inside blocks the gradient flows unmodified.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image
from torchvision.models import vgg16

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

# pooling-layer outputs by position in vgg16().features
_LAYER_INDEX = {
    "vgg16.block1.pool": 4,
    "vgg16.block2.pool": 9,
    "vgg16.block3.pool": 16,
    "vgg16.block4.pool": 23,
    "vgg16.block5.pool": 30,
}


@dataclass(frozen=True)
class ExtractionConfig:
    layer_id: str = "vgg16.block5.pool"
    input_size: int = 224
    weights: str = "imagenet"  # "imagenet", "random", or a state-dict file path
    seed: int = 0
    device: str = "cpu"
    expected_dims: tuple[int, int, int] = (512, 7, 7)

    def __post_init__(self):
        if self.layer_id not in _LAYER_INDEX:
            raise ValueError(
                f"unknown layer_id {self.layer_id!r}; choose from {sorted(_LAYER_INDEX)}"
            )


def _load_model(cfg: ExtractionConfig) -> torch.nn.Module:
    if cfg.weights == "imagenet":
        from torchvision.models import VGG16_Weights

        model = vgg16(weights=VGG16_Weights.IMAGENET1K_V1)
    elif cfg.weights == "random":
        torch.manual_seed(cfg.seed)
        model = vgg16(weights=None)
    else:
        model = vgg16(weights=None)
        state = torch.load(Path(cfg.weights), map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return model.to(cfg.device)


def _suppress_negative_gradients(module, grad_input, grad_output):
    return tuple(g.clamp(min=0.0) if g is not None else None for g in grad_input)


class VggAttentionExtractor:
    """Produces (activations, gradients) tensor pairs from RGB images."""

    def __init__(self, cfg: ExtractionConfig = ExtractionConfig()):
        torch.use_deterministic_algorithms(True)
        self.cfg = cfg
        self.model = _load_model(cfg)
        self._captured: torch.Tensor | None = None

        features = self.model.features
        for module in features:
            if isinstance(module, torch.nn.MaxPool2d):
                module.register_full_backward_hook(_suppress_negative_gradients)
        features[_LAYER_INDEX[cfg.layer_id]].register_forward_hook(self._capture)

    def _capture(self, module, args, output):
        self._captured = output

    def preprocess(self, image) -> torch.Tensor:
        """Decode to RGB, resize to the input size, normalize with ImageNet stats."""
        if isinstance(image, (str, Path)):
            image = Image.open(image)
        if isinstance(image, Image.Image):
            size = (self.cfg.input_size, self.cfg.input_size)
            arr = np.asarray(
                image.convert("RGB").resize(size, Image.BILINEAR), dtype=np.float32
            ) / 255.0
        else:
            raw = np.asarray(image)
            if raw.ndim != 3 or raw.shape[2] != 3:
                raise ValueError(f"array input must be HxWx3 RGB, got shape {raw.shape}")
            if np.issubdtype(raw.dtype, np.integer):
                return self.preprocess(Image.fromarray(raw.astype(np.uint8)))
            arr = raw.astype(np.float32)  # float arrays are taken as already in [0, 1]
            if arr.shape[:2] != (self.cfg.input_size, self.cfg.input_size):
                raise ValueError(f"float array input must be ({self.cfg.input_size}, "
                                 f"{self.cfg.input_size}, 3), got {arr.shape}")
        mean = np.asarray(IMAGENET_MEAN, dtype=np.float32)
        std = np.asarray(IMAGENET_STD, dtype=np.float32)
        arr = (arr - mean) / std
        return torch.from_numpy(arr.transpose(2, 0, 1)).unsqueeze(0).to(self.cfg.device)

    def extract_pair(self, image, seed_scale: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        """Run forward and partially guided backward; returns (L, G) as numpy arrays.

        `seed_scale` multiplies the softmax seed vector; gradients scale
        linearly with it, which downstream min-max normalization cancels.
        """
        x = self.preprocess(image)
        self._captured = None
        x.requires_grad_(True)
        logits = self.model(x)
        activations = self._captured
        if activations is None:
            raise RuntimeError("forward hook did not fire; layer wiring is broken")
        seed = F.softmax(logits, dim=1).detach() * seed_scale
        (grad,) = torch.autograd.grad(logits, activations, grad_outputs=seed)

        pair = (
            activations.detach()[0].cpu().numpy().astype(np.float32),
            grad[0].cpu().numpy().astype(np.float32),
        )
        for name, arr in zip(("activations", "gradients"), pair):
            if tuple(arr.shape) != self.cfg.expected_dims:
                raise ValueError(
                    f"{name} dims {arr.shape} != expected {self.cfg.expected_dims}; "
                    f"layer {self.cfg.layer_id} does not match the configured dims"
                )
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} contain non-finite values")
        return pair
