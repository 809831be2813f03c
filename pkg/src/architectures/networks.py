import logging
import math

import torch
import torch.nn as nn

from app.exceptions import ShapeError

from architectures.models import ModelSpec


def conv_block(in_channels: int, out_channels: int, kernel_size: int) -> list[nn.Module]:
    # 'same' padding keeps the temporal length for odd kernels
    return [nn.Conv1d(in_channels, out_channels, kernel_size=kernel_size, padding=kernel_size // 2), nn.ReLU()]


class MCNN(nn.Module):
    """ stacked temporal convolutions with pooling, global average pool, linear head """
    def __init__(self, spec: ModelSpec):
        super().__init__()
        layers = []
        in_channels = spec.n_channels
        for _ in range(spec.conv_blocks):
            layers += conv_block(in_channels, spec.filters, spec.kernel_size)
            layers.append(nn.MaxPool1d(kernel_size=2, ceil_mode=True))
            in_channels = spec.filters
        self.features = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool1d(1)
        self.head = nn.Linear(in_channels, spec.n_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # (batch, time, channel) -> (batch, channel, time)
        out = self.features(x.transpose(1, 2))
        out = self.pool(out).squeeze(-1)
        return self.head(out)


class CNNLSTM(nn.Module):
    """ temporal convolutions feeding an LSTM, classified from the last hidden state """
    def __init__(self, spec: ModelSpec):
        super().__init__()
        layers = []
        in_channels = spec.n_channels
        for _ in range(spec.conv_blocks):
            layers += conv_block(in_channels, spec.filters, spec.kernel_size)
            in_channels = spec.filters
        self.features = nn.Sequential(*layers)
        self.lstm = nn.LSTM(input_size=in_channels, hidden_size=spec.hidden_size, batch_first=True)
        self.head = nn.Linear(spec.hidden_size, spec.n_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.features(x.transpose(1, 2)).transpose(1, 2)
        _, (hidden, _) = self.lstm(out)
        return self.head(hidden[-1])


def sinusoidal_positions(length: int, d_model: int) -> torch.Tensor:
    position = torch.arange(length, dtype=torch.float32).unsqueeze(1)
    div_term = torch.exp(torch.arange(0, d_model, 2, dtype=torch.float32) * (-math.log(10000.0) / d_model))
    table = torch.zeros(length, d_model)
    table[:, 0::2] = torch.sin(position * div_term)
    table[:, 1::2] = torch.cos(position * div_term[:d_model // 2])
    return table


class Transformer(nn.Module):
    """ linear embedding with sinusoidal positions, encoder blocks, mean pool, linear head """
    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.embed = nn.Linear(spec.n_channels, spec.d_model)
        self.register_buffer('positions', sinusoidal_positions(spec.window_length, spec.d_model), persistent=False)
        layer = nn.TransformerEncoderLayer(d_model=spec.d_model, nhead=spec.n_heads, dim_feedforward=spec.ff_size,
                                           dropout=spec.dropout, batch_first=True)
        self.encoder = nn.TransformerEncoder(layer, num_layers=spec.encoder_blocks, enable_nested_tensor=False)
        self.head = nn.Linear(spec.d_model, spec.n_classes)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = self.embed(x) + self.positions[:x.shape[1]].to(x.dtype)
        out = self.encoder(out)
        return self.head(out.mean(dim=1))


NETWORKS = {
    'MCNN': MCNN,
    'CNNLSTM': CNNLSTM,
    'TRANSFORMER': Transformer,
}


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def build_model(spec: ModelSpec, seed: int) -> nn.Module:
    """ builds the network for spec with initial parameters determined by seed alone """
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = NETWORKS[spec.arch](spec)
    model.spec = spec

    count = parameter_count(model)
    if count <= 0:
        raise ShapeError('arch', f'{spec.arch} has no trainable parameters')
    logging.debug(f'built {spec.arch} with {count} parameters (seed {seed})')
    return model
