"""Decentralized multi-robot layer: databases, messages, schedule and agents."""

from msslam.swarm.agent import AgentConfig, RobotAgent, SlideMatchConfig, TrackerConfig, recognize
from msslam.swarm.comm import CommRecord, CommSchedule, step_comm
from msslam.swarm.database import PeerState, RobotDatabase, snapshot_message
from msslam.swarm.messages import KeyPoseRecord, PeerMessage, decode, encode

__all__ = [
    "AgentConfig", "CommRecord", "CommSchedule", "KeyPoseRecord", "PeerMessage", "PeerState",
    "RobotAgent", "RobotDatabase", "SlideMatchConfig", "TrackerConfig", "decode", "encode",
    "recognize", "snapshot_message", "step_comm",
]
