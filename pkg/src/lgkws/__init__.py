"""Small-footprint keyword spotting with attention-augmented temporal convolutions.

The package is self-contained: a numpy-backed reverse-mode autodiff engine
(`autograd`), an MFCC front-end (`frontend`), the LG-Net model family
(`model`), triplet/cross-entropy losses with text anchors (`losses`,
`anchors`), dataset handling including a synthetic corpus (`data`), a
two-stage trainer (`train`), accuracy/FRR evaluation (`evaluate`) and a
command line front door (`cli`).
"""

__version__ = "0.1.0"
