# Copyright 2026 The CENAS Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Regenerates the binary loader fixtures under golden/ and corrupt/.

Golden files are tiny hand-laid-out IDX and CIFAR-10 batches. Each corrupt
file breaks exactly one rule of its format; manifest.json records which
loader reads it and the byte offset the error must report.
"""

import json
import struct
from pathlib import Path

HERE = Path(__file__).resolve().parent


def idx_images(n, h, w, pixels, magic=0x803):
    return struct.pack(">IIII", magic, n, h, w) + bytes(pixels)


def idx_labels(n, labels, magic=0x801):
    return struct.pack(">II", magic, n) + bytes(labels)


def cifar_record(label, seed):
    # planar R, G, B planes of 32x32; corners carry recognisable values
    planes = []
    for c in range(3):
        plane = [(seed * 31 + c * 7 + i) % 256 for i in range(1024)]
        plane[0] = 10 * (c + 1) + seed
        plane[1023] = 200 + 10 * c + seed
        planes += plane
    return bytes([label]) + bytes(planes)


def main():
    golden = HERE / "golden"
    corrupt = HERE / "corrupt"
    golden.mkdir(exist_ok=True)
    corrupt.mkdir(exist_ok=True)

    pixels = [0, 51, 102, 153, 204, 255, 1, 2, 3, 4, 5, 6, 250, 128, 64, 32, 16, 8]
    labels = [0, 9, 3]
    img = idx_images(3, 2, 3, pixels)
    lab = idx_labels(3, labels)
    (golden / "tiny-images.idx3").write_bytes(img)
    (golden / "tiny-labels.idx1").write_bytes(lab)
    cifar = cifar_record(3, 1) + cifar_record(7, 2)
    (golden / "tiny.cifar.bin").write_bytes(cifar)

    cases = []

    def idx(name, images, labels_, offset):
        (corrupt / f"{name}-images.idx3").write_bytes(images)
        (corrupt / f"{name}-labels.idx1").write_bytes(labels_)
        cases.append({"name": name, "loader": "idx", "images": f"{name}-images.idx3",
                      "labels": f"{name}-labels.idx1", "offset": offset})

    def cif(name, data, offset):
        (corrupt / f"{name}.bin").write_bytes(data)
        cases.append({"name": name, "loader": "cifar", "file": f"{name}.bin", "offset": offset})

    idx("images-bad-magic", idx_images(3, 2, 3, pixels, magic=0x804), lab, 0)
    idx("labels-bad-magic", img, idx_labels(3, labels, magic=0x803), 0)
    idx("images-short-header", img[:10], lab, 10)
    idx("labels-short-header", img, lab[:5], 5)
    idx("images-truncated-payload", img[:-1], lab, len(img) - 1)
    idx("images-trailing-bytes", img + b"\x00\x00", lab, len(img))
    idx("labels-truncated-payload", img, lab[:-1], len(lab) - 1)
    idx("labels-trailing-byte", img, lab + b"\x01", len(lab))
    idx("count-mismatch", img, idx_labels(2, labels[:2]), 4)
    idx("zero-images", idx_images(0, 2, 3, []), idx_labels(0, []), 4)
    idx("zero-height", idx_images(3, 0, 3, []), lab, 8)
    idx("images-empty-file", b"", lab, 0)
    idx("label-out-of-range", img, idx_labels(3, [0, 10, 3]), 9)
    idx("labels-as-images", lab, lab, 0)
    idx("huge-count", idx_images(0xFFFFFFFF, 2, 3, pixels),
        idx_labels(0xFFFFFFFF, labels), len(img))

    cif("cifar-short-record", cifar[:3072], 0)
    cif("cifar-empty", b"", 0)
    cif("cifar-label-ten", bytes([10]) + cifar[1:], 0)
    cif("cifar-label-255-second-record", cifar[:3073] + bytes([255]) + cifar[3074:], 3073)
    cif("cifar-extra-byte", cifar + b"\x00", 2 * 3073)

    (corrupt / "manifest.json").write_text(json.dumps(cases, indent=1) + "\n")


if __name__ == "__main__":
    main()
