"""Dropout is DropConnect with a column mask, and Dropout is multiplicative noise.

    python3 demos/dropout_vs_dropconnect.py
"""

import numpy as np

from noisereg import regularize, verify
from noisereg.augment import noise_multiplicative
from noisereg.net import layer_forward
from noisereg.numkit import RandomStream

s = RandomStream(4)
layer = verify.random_layer(s.split("layer"), 4)
y = s.split("input").uniform01(layer.in_dim) * 2 - 1
r = regularize.sample_neuron_mask(0.5, layer.in_dim, s.split("mask"))

a = regularize.dropout_forward(layer, y, r)
M = regularize.embed_neuron_mask(r, layer.out_dim)
b = regularize.dropconnect_forward(regularize.augment_layer(layer), regularize.augment_input(y), M, layer.activation)
c = layer_forward(layer, noise_multiplicative(y, r))
print("mask:", r)
print("embedded DropConnect mask:\n", M)
print("dropout     :", a)
print("dropconnect :", b)
print("noisy input :", c)
print("bit-identical:", np.array_equal(a, b) and np.array_equal(a, c))

print("\n100 random cases:", verify.verify_dropout_reduction(100, RandomStream(1)).to_dict())
print("thinned networks for n=0..4:", [regularize.count_mask_patterns(n) for n in range(5)])
