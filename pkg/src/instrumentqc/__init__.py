"""Quality-control toolkit for surgical-instrument imagery.

Subpackages cover the full inspection workflow: pixel-exact image
transforms (``imaging``), labeled-dataset handling and synthetic corpus
generation (``dataset``, ``synthetic``), deterministic 12x augmentation
(``augment``), a generic early-stopping training loop with a built-in
softmax baseline (``model``), the two-stage scan pipeline with
confidence dispositions (``pipeline``), evaluation metrics (``metrics``),
categorical statistics (``stats``), and an HTTP service with a manual
review queue (``service``).
"""

__version__ = "0.1.0"
