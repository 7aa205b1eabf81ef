#!/usr/bin/env python3
"""
事件流与重构报告的持久化

事件: CSV (列 channel,t,p)，浮点数以最短往返表示写出，读回时逐位一致
元数据: 同名 .meta.json，保存各通道的 C、t0、f0、T、K (空通道也可还原)
报告: JSON
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from fri_reconstructor import ReconstructionReport
from neuromorphic_encoder import EventStream

logger = logging.getLogger(__name__)

EVENT_FORMAT = 'neuromorphic-events'
EVENT_FORMAT_VERSION = 1
EVENT_COLUMNS = ['channel', 't', 'p']

PathLike = Union[str, Path]


def default_meta_path(csv_path: PathLike) -> Path:
    csv_path = Path(csv_path)
    return csv_path.with_name(csv_path.stem + '.meta.json')


def events_to_frame(streams: Sequence[EventStream]) -> pd.DataFrame:
    """多通道事件拼成一张长表"""
    frames = [pd.DataFrame({'channel': np.full(len(s), s.channel, dtype=int),
                            't': s.times,
                            'p': s.polarities.astype(int)})
              for s in streams]
    if not frames:
        return pd.DataFrame(columns=EVENT_COLUMNS)
    return pd.concat(frames, ignore_index=True)[EVENT_COLUMNS]


def write_event_streams(streams: Sequence[EventStream], csv_path: PathLike,
                        meta_path: Optional[PathLike] = None) -> Path:
    """
    写出事件CSV与元数据JSON

    Returns:
        元数据文件路径
    """
    csv_path = Path(csv_path)
    meta_path = Path(meta_path) if meta_path else default_meta_path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)

    channels = [s.channel for s in streams]
    if len(set(channels)) != len(channels):
        raise ValueError(f"通道号重复: {channels}")

    events_to_frame(streams).to_csv(csv_path, index=False)
    meta = {
        'format': EVENT_FORMAT,
        'version': EVENT_FORMAT_VERSION,
        'channels': [{'channel': s.channel, 'C': s.C, 't0': s.t0, 'f0': s.f0, 'T': s.T, 'K': s.K}
                     for s in streams],
    }
    with open(meta_path, 'w', encoding='utf-8') as f:
        json.dump(meta, f, indent=2)

    logger.info(f"事件已保存: {csv_path} ({sum(len(s) for s in streams)} 个事件, {len(streams)} 个通道)")
    return meta_path


def read_event_streams(csv_path: PathLike, meta_path: Optional[PathLike] = None) -> List[EventStream]:
    """读回 write_event_streams 写出的事件流，按元数据中的通道顺序返回"""
    csv_path = Path(csv_path)
    meta_path = Path(meta_path) if meta_path else default_meta_path(csv_path)

    with open(meta_path, 'r', encoding='utf-8') as f:
        meta = json.load(f)
    if meta.get('format') != EVENT_FORMAT:
        raise ValueError(f"未知的事件文件格式: {meta.get('format')}")

    df = pd.read_csv(csv_path, dtype={'channel': int, 't': float, 'p': int},
                     float_precision='round_trip')
    missing = set(EVENT_COLUMNS) - set(df.columns)
    if missing:
        raise ValueError(f"事件CSV缺少列: {sorted(missing)}")

    groups = {int(ch): group for ch, group in df.groupby('channel', sort=False)}
    streams = []
    for entry in meta['channels']:
        group = groups.get(int(entry['channel']))
        times = group['t'].to_numpy(dtype=float) if group is not None else np.empty(0)
        polarities = group['p'].to_numpy(dtype=np.int8) if group is not None else np.empty(0, dtype=np.int8)
        streams.append(EventStream(times, polarities, entry['C'], t0=entry['t0'], f0=entry['f0'],
                                   channel=entry['channel'], T=entry['T'], K=entry.get('K')))

    unknown = set(groups) - {int(e['channel']) for e in meta['channels']}
    if unknown:
        logger.warning(f"事件CSV中存在元数据未声明的通道: {sorted(unknown)}")
    return streams


def write_reports(reports: Union[ReconstructionReport, Sequence[ReconstructionReport]],
                  json_path: PathLike, extra: Optional[Dict] = None) -> None:
    """重构报告写为JSON (单个报告写对象，多个写 {"channels": [...]})"""
    json_path = Path(json_path)
    json_path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(reports, ReconstructionReport):
        payload = reports.to_dict()
    else:
        payload = {'channels': [r.to_dict() for r in reports]}
    if extra:
        payload.update(extra)
    with open(json_path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2)


def read_reports(json_path: PathLike) -> List[ReconstructionReport]:
    with open(json_path, 'r', encoding='utf-8') as f:
        payload = json.load(f)
    records = payload['channels'] if 'channels' in payload else [payload]
    return [ReconstructionReport.from_dict(r) for r in records]
