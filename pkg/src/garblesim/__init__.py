"""Garbled-circuit toolchain.

Subpackages map onto the pipeline stages:

netlist    Bristol-format circuits, plaintext evaluation, test generators
gcrypto    labels, Half-Gate/FreeXOR garbling and evaluation
isa        accelerator instructions, assembler, bit-exact encoding
compiler   reorder/rename/spent-wire passes, stream generation, traffic
simulator  cycle-accurate machine model (gate engines, wire window, DRAM)
cli        command-line driver

The AES core behind the label hash has a compiled (Cython) and a pure-Python
implementation; garblesim.cryptocore selects one at import time.
"""

__version__ = "0.1.0"
