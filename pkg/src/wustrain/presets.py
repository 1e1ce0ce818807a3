"""Model presets, from desk-scale test nets to the full-scale CIFAR stacks.

`mlp-small` and `cnn-small` run comfortably on a laptop CPU; the AlexNet/VGG
presets are provided for users with compute and are not exercised by CI.
"""

from __future__ import annotations

from .errors import ConfigError
from .network import LayerSpec

_L = LayerSpec


def mlp_small(classes: int) -> list:
    return [_L.flatten(), _L.dense(32), _L.relu(), _L.dense(classes)]


def cnn_small(classes: int) -> list:
    """~100k parameters on 3x32x32 input; two conv/bn/pool stages plus an MLP head."""
    return [
        _L.conv2d(12, 3, stride=1, padding=1), _L.batchnorm2d(), _L.relu(),
        _L.maxpool2d(2),
        _L.conv2d(24, 3, stride=1, padding=1), _L.batchnorm2d(), _L.relu(),
        _L.maxpool2d(2),
        _L.flatten(),
        _L.dense(64), _L.relu(),
        _L.dense(classes),
    ]


def alexnet_cifar(classes: int) -> list:
    return [
        _L.conv2d(64, 3, stride=1, padding=1), _L.relu(), _L.maxpool2d(2),
        _L.conv2d(192, 3, stride=1, padding=1), _L.relu(), _L.maxpool2d(2),
        _L.conv2d(384, 3, stride=1, padding=1), _L.relu(),
        _L.conv2d(256, 3, stride=1, padding=1), _L.relu(),
        _L.conv2d(256, 3, stride=1, padding=1), _L.relu(), _L.maxpool2d(2),
        _L.flatten(),
        _L.dense(1024), _L.relu(),
        _L.dense(512), _L.relu(),
        _L.dense(classes),
    ]


def _vgg(plan, classes: int) -> list:
    layers: list = []
    for entry in plan:
        if entry == "M":
            layers.append(_L.maxpool2d(2))
        else:
            layers.append(_L.conv2d(entry, 3, stride=1, padding=1))
            layers.append(_L.relu())
    layers += [_L.flatten(), _L.dense(classes)]
    return layers


def vgg11_cifar(classes: int) -> list:
    return _vgg([64, "M", 128, "M", 256, 256, "M", 512, 512, "M", 512, 512, "M"], classes)


def vgg16_cifar(classes: int) -> list:
    return _vgg(
        [64, 64, "M", 128, 128, "M", 256, 256, 256, "M",
         512, 512, 512, "M", 512, 512, 512, "M"],
        classes,
    )


PRESETS = {
    "mlp-small": mlp_small,
    "cnn-small": cnn_small,
    "alexnet-cifar": alexnet_cifar,
    "vgg11-cifar": vgg11_cifar,
    "vgg16-cifar": vgg16_cifar,
}


def model_layers(model, classes: int) -> list:
    """Resolve a preset name or an inline list of layer dicts into LayerSpecs."""
    if isinstance(model, str):
        if model not in PRESETS:
            raise ConfigError(
                f"unknown model preset {model!r}; available: {sorted(PRESETS)}"
            )
        return PRESETS[model](classes)
    if isinstance(model, (list, tuple)):
        return [LayerSpec.from_dict(d) for d in model]
    raise ConfigError(f"model must be a preset name or a layer list, got {type(model).__name__}")
