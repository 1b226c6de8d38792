"""
Semi-Supervised Neuroevolution v1.0

Evolves MLP architectures for binary classification with a genetic
algorithm whose fitness can blend neuron coverage of unlabeled data with
balanced accuracy on labeled validation data.

Modules:
- nn           from-scratch numpy MLP, training, activation tracing
- descriptor   list-based architecture genome
- coverage     NC, TKNC, KMN, NBC, SNAC
- data         PMLB loading, stratified splits, label masking
- fitness      SUPERVISED, COVERAGE, CERT and RET strategies
- evolution    truncation selection, five mutation operators, elitist replacement
- experiment   experiment grid and final test protocol
- reporting    summary tables and SVG plots
- cli          `neuroevo` command
"""

__version__ = "1.0.0"
