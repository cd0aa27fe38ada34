from fractions import Fraction


type Real = Fraction | float
type Point = tuple[Real, ...]
type Matrix = tuple[tuple[Real, ...], ...]
type Interval = tuple[Fraction, Fraction]
type Bounds = tuple[Interval, ...]
type OpenName = str
type IndexPair = tuple[int, int]
type IndexTriple = tuple[int, int, int]
