"""Shared fixtures: synthetic images, tiny graphs, a tiny GAT"""

import numpy as np
import pytest

from src.graph.region_graph import RegionGraph, RegionNode
from src.imaging.raster import RgbImage
from src.model.gat import GatModel, ModelConfig

PINK = (220, 150, 190)
WHITE = (245, 245, 245)


def disk_image(size: int = 64, radius: int = 20, color=PINK, background=WHITE):
    """Pink disk centred on a white canvas; returns (image, disk bits)"""
    yy, xx = np.mgrid[0:size, 0:size]
    disk = (yy - size // 2) ** 2 + (xx - size // 2) ** 2 <= radius ** 2
    pixels = np.empty((size, size, 3), dtype=np.uint8)
    pixels[:] = background
    pixels[disk] = color
    return RgbImage(pixels), disk


def chain_graph(n: int) -> RegionGraph:
    """Path 0-1-...-(n-1) of one-pixel regions laid out in a row"""
    nodes = {
        i: RegionNode(node_id=i, pixel_count=1, bbox=(0, i, 1, i + 1), members=(i,))
        for i in range(n)
    }
    graph = RegionGraph(nodes=nodes)
    for i in range(n - 1):
        graph.add_edge(i, i + 1)
    return graph


@pytest.fixture
def pink_disk():
    return disk_image()


@pytest.fixture
def two_tone_image():
    """Left half red-ish, right half blue-ish, 32 x 64"""
    pixels = np.zeros((32, 64, 3), dtype=np.uint8)
    pixels[:, :32] = (200, 60, 60)
    pixels[:, 32:] = (60, 60, 200)
    return RgbImage(pixels)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_model():
    model = GatModel(
        ModelConfig(in_dim=3, hidden_dim=4, layers=2, heads=2, dropout=0.0, mlp_hidden=5, num_classes=4, readout="mean")
    )
    model.reset_parameters(7)
    return model
