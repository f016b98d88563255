#!/usr/bin/env python3
"""Build the toy classifier and dataset fixtures used by the RD tests.

Trains a small conv + dense network with torch on synthetic 16x16 pattern
images, then writes the NNM model and NND dataset with hand-rolled struct
code (deliberately not importing nncodec) so the fixtures double as an
independent check of the container readers. Also stores golden scores and
accuracies computed by torch.

    python scripts/make_fixtures.py tests/fixtures
"""

import json
import struct
import sys
from pathlib import Path

import numpy as np
import torch
from torch import nn

SEED = 1234
CLASSES = 10
SIDE = 16
TRAIN, TEST = 6000, 1000

GRAPH = """\
input 1 16 16
conv conv1.w conv1.b
relu
maxpool2
conv conv2.w conv2.b
scale bn2.g
relu
maxpool2
conv1x1 mix.w mix.b
relu
flatten
dense fc1.w fc1.b
relu
dense fc2.w fc2.b
"""


def make_templates(rng):
    yy, xx = np.mgrid[0:SIDE, 0:SIDE] / (SIDE - 1)
    temps = []
    for c in range(CLASSES):
        angle = np.pi * c / CLASSES
        freq = 1.5 + (c % 3)
        t = np.cos(2 * np.pi * freq * (np.cos(angle) * xx + np.sin(angle) * yy))
        cy, cx = rng.uniform(0.25, 0.75, size=2)
        t += 1.5 * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / 0.02)
        temps.append(t)
    return np.stack(temps)


def sample(rng, temps, n):
    labels = rng.integers(0, CLASSES, size=n)
    imgs = temps[labels]
    shifts = rng.integers(-2, 3, size=(n, 2))
    imgs = np.stack([np.roll(im, tuple(s), axis=(0, 1)) for im, s in zip(imgs, shifts)])
    imgs = imgs * rng.uniform(0.6, 1.4, size=(n, 1, 1)) + rng.normal(0, 1.8, size=imgs.shape)
    return imgs[:, None].astype(np.float32), labels


class Net(nn.Module):
    def __init__(self):
        super().__init__()
        self.conv1 = nn.Conv2d(1, 8, 3, padding=1)
        self.conv2 = nn.Conv2d(8, 16, 3, padding=1)
        self.bn2 = nn.Parameter(torch.ones(16))
        self.mix = nn.Conv2d(16, 16, 1)
        self.fc1 = nn.Linear(256, 512)
        self.fc2 = nn.Linear(512, CLASSES)

    def forward(self, x):
        x = nn.functional.max_pool2d(torch.relu(self.conv1(x)), 2)
        x = self.conv2(x) * self.bn2.view(1, -1, 1, 1)
        x = nn.functional.max_pool2d(torch.relu(x), 2)
        x = torch.relu(self.mix(x)).flatten(1)
        return self.fc2(torch.relu(self.fc1(x)))


def export_layers(net):
    f = lambda t: t.detach().numpy().astype(np.float32)
    return [
        ("conv1.w", "conv", f(net.conv1.weight).transpose(2, 3, 1, 0)),
        ("conv1.b", "bias", f(net.conv1.bias)),
        ("conv2.w", "conv", f(net.conv2.weight).transpose(2, 3, 1, 0)),
        ("conv2.b", "bias", f(net.conv2.bias)),
        ("bn2.g", "norm", f(net.bn2)),
        ("mix.w", "conv1x1", f(net.mix.weight)[:, :, 0, 0].T),
        ("mix.b", "bias", f(net.mix.bias)),
        ("fc1.w", "dense", f(net.fc1.weight)),
        ("fc1.b", "bias", f(net.fc1.bias)),
        ("fc2.w", "dense", f(net.fc2.weight)),
        ("fc2.b", "bias", f(net.fc2.bias)),
    ]


def write_nnm(layers, arch_meta: bytes) -> bytes:
    entries, blobs, off = [], [], 0
    for name, kind, arr in layers:
        blob = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "kind": kind, "shape": list(arr.shape), "offset": off, "length": len(blob)})
        blobs.append(blob)
        off += len(blob)
    header = {"layers": entries, "arch_meta": {"offset": off, "length": len(arch_meta)}}
    head = json.dumps(header, separators=(",", ":"), ensure_ascii=False).encode()
    return b"NNM1" + struct.pack("<Q", len(head)) + head + b"".join(blobs) + arch_meta


def write_nnd(x, y) -> bytes:
    shape = x.shape[1:]
    head = b"NND1" + struct.pack("<IB", len(y), len(shape)) + struct.pack(f"<{len(shape)}I", *shape)
    head += struct.pack("<I", CLASSES)
    return head + x.astype("<f4").tobytes() + y.astype("<u2").tobytes()


def topk(scores, labels, k):
    own = scores[np.arange(len(labels)), labels][:, None]
    cls = np.arange(scores.shape[1])[None]
    rank = ((scores > own) | ((scores == own) & (cls < labels[:, None]))).sum(1)
    return float(np.mean(rank < k))


def main(out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)
    torch.manual_seed(SEED)
    temps = make_templates(rng)
    xtr, ytr = sample(rng, temps, TRAIN)
    xte, yte = sample(rng, temps, TEST)

    net = Net()
    opt = torch.optim.Adam(net.parameters(), lr=2e-3)
    xt, yt = torch.from_numpy(xtr), torch.from_numpy(ytr)
    for epoch in range(12):
        perm = torch.randperm(TRAIN)
        for i in range(0, TRAIN, 100):
            idx = perm[i:i + 100]
            opt.zero_grad()
            loss = nn.functional.cross_entropy(net(xt[idx]), yt[idx])
            loss.backward()
            opt.step()

    with torch.no_grad():
        scores = net(torch.from_numpy(xte)).numpy()
    golden = {
        "top1": topk(scores, yte, 1),
        "top5": topk(scores, yte, 5),
        "scores_first8": scores[:8].astype(float).tolist(),
    }
    (out / "toy.nnm").write_bytes(write_nnm(export_layers(net), GRAPH.encode()))
    (out / "toy.nnd").write_bytes(write_nnd(xte, yte))
    (out / "toy_golden.json").write_text(json.dumps(golden, indent=1) + "\n")
    print(f"top1 {golden['top1']:.3f} top5 {golden['top5']:.3f}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures")
