"""3D residual classification network.

Stem 7x7x7 conv (stride 2) + max-pool, four basic-block stages at widths
(64, 128, 256, 512) with strides (1, 2, 2, 2), global average pooling, and a
linear head. Block counts [3, 4, 6, 3] give the depth-34 network; [1, 1, 1, 1]
the reduced depth-10 variant used for desk-scale runs. Downsampling shortcuts
are 1x1x1 projections.
"""

from __future__ import annotations

import torch
import torch.nn as nn

STAGE_WIDTHS = (64, 128, 256, 512)
STAGE_STRIDES = (1, 2, 2, 2)
BLOCK_COUNTS = {"RESNET34_3D": (3, 4, 6, 3), "RESNET10_3D": (1, 1, 1, 1)}


class BasicBlock3d(nn.Module):
    def __init__(self, in_planes: int, planes: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv3d(in_planes, planes, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm3d(planes)
        self.conv2 = nn.Conv3d(planes, planes, 3, stride=1, padding=1, bias=False)
        self.bn2 = nn.BatchNorm3d(planes)
        self.relu = nn.ReLU(inplace=True)
        if stride != 1 or in_planes != planes:
            self.downsample = nn.Sequential(
                nn.Conv3d(in_planes, planes, 1, stride=stride, bias=False),
                nn.BatchNorm3d(planes),
            )
        else:
            self.downsample = None

    def forward(self, x):
        identity = x if self.downsample is None else self.downsample(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + identity)


class ResNet3d(nn.Module):
    def __init__(self, block_counts, in_channels: int = 1, n_classes: int = 2):
        super().__init__()
        self.conv1 = nn.Conv3d(in_channels, STAGE_WIDTHS[0], 7, stride=2, padding=3, bias=False)
        self.bn1 = nn.BatchNorm3d(STAGE_WIDTHS[0])
        self.relu = nn.ReLU(inplace=True)
        self.maxpool = nn.MaxPool3d(kernel_size=3, stride=2, padding=1)

        in_planes = STAGE_WIDTHS[0]
        for i, (width, stride, count) in enumerate(zip(STAGE_WIDTHS, STAGE_STRIDES, block_counts), 1):
            blocks = [BasicBlock3d(in_planes, width, stride)]
            blocks += [BasicBlock3d(width, width) for _ in range(count - 1)]
            setattr(self, f"layer{i}", nn.Sequential(*blocks))
            in_planes = width

        self.avgpool = nn.AdaptiveAvgPool3d(1)
        self.fc = nn.Linear(STAGE_WIDTHS[-1], n_classes)

    def forward(self, x):
        x = self.maxpool(self.relu(self.bn1(self.conv1(x))))
        x = self.layer4(self.layer3(self.layer2(self.layer1(x))))
        x = torch.flatten(self.avgpool(x), 1)
        return self.fc(x)

    def feature_module(self, layer_id: str) -> nn.Module:
        """Resolve a named submodule whose output is a (C, D, H, W) activation."""
        modules = dict(self.named_modules())
        if layer_id not in modules:
            raise KeyError(layer_id)
        return modules[layer_id]
