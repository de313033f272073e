"""Building blocks shared by the generators and discriminators."""
from torch import nn


def layer_norm(channels: int) -> nn.Module:
    # normalizes over (C, H, W) of each sample, per-channel affine
    return nn.GroupNorm(1, channels, affine=True)


class DownBlock(nn.Sequential):
    """Stride-2 convolution, instance norm, ReLU."""

    def __init__(self, cin, cout, kernel=4, reflect=False):
        pad = (kernel - 1) // 2 if kernel % 2 else kernel // 2 - 1
        super().__init__(
            nn.Conv2d(cin, cout, kernel, stride=2, padding=pad, padding_mode="reflect" if reflect else "zeros"),
            nn.InstanceNorm2d(cout),
            nn.ReLU(inplace=True),
        )


class ResidualBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect"),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect"),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.body(x)


class UpBlock(nn.Sequential):
    """Nearest ×2 upsampling, convolution, layer norm with affine parameters, ReLU."""

    def __init__(self, cin, cout):
        super().__init__(
            nn.Upsample(scale_factor=2, mode="nearest"),
            nn.Conv2d(cin, cout, 3, padding=1, padding_mode="reflect"),
            layer_norm(cout),
            nn.ReLU(inplace=True),
        )


class ConvFeatureBlock(nn.Sequential):
    """Convolution, batch norm, 2×2 max pooling, ReLU."""

    def __init__(self, cin, cout, kernel=3):
        super().__init__(
            nn.Conv2d(cin, cout, kernel, padding=kernel // 2),
            nn.BatchNorm2d(cout),
            nn.MaxPool2d(2),
            nn.ReLU(inplace=True),
        )


def encoder(cin, widths, kernel, res_blocks):
    layers = []
    prev = cin
    for i, w in enumerate(widths):
        layers.append(DownBlock(prev, w, kernel, reflect=(i == 0)))
        prev = w
    layers += [ResidualBlock(prev) for _ in range(res_blocks)]
    return nn.Sequential(*layers)


def decoder(cin, n_up, res_blocks):
    layers = [ResidualBlock(cin) for _ in range(res_blocks)]
    prev = cin
    for _ in range(n_up):
        layers.append(UpBlock(prev, max(prev // 2, 4)))
        prev = max(prev // 2, 4)
    return nn.Sequential(*layers), prev
