import enum


class TripletClass(enum.Enum):
    IN_CLASS = "in-class"
    OUT_OF_CLASS = "out-of-class"


class Verdict(enum.Enum):
    ACCEPT = "accept"
    SWAP = "swap"
    REJECT = "reject"
