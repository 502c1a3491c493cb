import pytest

from planq import pddl
from planq.teacher import builtin_domain

GRIPPER_ONE_BALL = """
(define (problem gripper-one)
  (:domain gripper)
  (:objects rooma roomb - room ball1 - ball left right - gripper)
  (:init (at-robby rooma) (at ball1 rooma) (free left) (free right))
  (:goal (and (at ball1 roomb))))
"""

GRIPPER_TWO_BALLS = """
(define (problem gripper-two)
  (:domain gripper)
  (:objects rooma roomb - room ball1 ball2 - ball left right - gripper)
  (:init (at-robby rooma) (at ball1 rooma) (at ball2 rooma) (free left) (free right))
  (:goal (and (at ball1 roomb) (at ball2 roomb))))
"""


@pytest.fixture(scope="session")
def gripper_domain():
    return builtin_domain("gripper")


@pytest.fixture(scope="session")
def gripper_one(gripper_domain):
    inst = pddl.parse_instance(GRIPPER_ONE_BALL, gripper_domain)
    return pddl.ground(gripper_domain, inst)


@pytest.fixture(scope="session")
def gripper_two(gripper_domain):
    inst = pddl.parse_instance(GRIPPER_TWO_BALLS, gripper_domain)
    return pddl.ground(gripper_domain, inst)
