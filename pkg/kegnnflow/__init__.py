"""知识增强图神经网络（KeGNN）：在 MLP/GCN/GAT 之上叠加可微的模糊逻辑子句增强层。"""

__version__ = "0.1.0"
