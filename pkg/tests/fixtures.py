"""Published CIFAR-10 / ResNet-18 rows: (UA, RA, TA, MI) with the printed deltas, in percent."""

GOLD_10 = (5.24, 100.00, 94.26, 12.88)
GOLD_50 = (7.91, 100.00, 91.72, 19.29)

# method -> (values, printed deltas)
ROWS_10 = {
    "FT": ((0.63, 99.88, 94.06, 2.70), ("4.61", "0.12", "0.20", "10.18")),
    "RandL": ((7.61, 99.67, 92.83, 37.36), ("2.37", "0.33", "1.43", "24.48")),
    "GA": ((0.69, 99.50, 94.01, 1.70), ("4.55", "0.50", "0.25", "11.18")),
    "Amnesiac": ((7.58, 98.87, 91.98, 3.76), ("2.34", "1.13", "2.28", "9.12")),
    "Fisher": ((86.95, 20.42, 19.01, 7.13), ("81.71", "79.58", "75.25", "5.75")),
    "SSD": ((9.91, 87.87, 82.19, 5.56), ("4.67", "12.13", "12.07", "7.32")),
    "BadT": ((17.66, 98.44, 83.59, 27.70), ("12.42", "1.56", "10.67", "14.82")),
    "SalUn": ((4.09, 99.41, 93.19, 12.58), ("1.15", "0.59", "1.07", "0.30")),
    "LTU": ((4.37, 99.83, 93.95, 12.97), ("0.87", "0.17", "0.31", "0.09")),
    "LTU w/o ForFeed": ((11.97, 98.34, 93.21, 28.81), ("6.73", "1.66", "1.05", "15.93")),
    "LTU w/o RemFeed": ((23.35, 72.30, 70.51, 25.16), ("18.11", "27.70", "23.75", "12.28")),
    "LTU w/o MetaOpt": ((18.09, 91.24, 90.22, 16.56), ("12.85", "8.76", "4.04", "3.68")),
    "LTU w/ GradAdd": ((6.26, 97.40, 89.54, 15.80), ("1.02", "2.60", "4.72", "2.92")),
    "LTU w/ iterative Grad": ((7.11, 96.13, 87.51, 16.03), ("1.87", "3.87", "6.75", "3.15")),
}

ROWS_50 = {
    "FT": ((0.44, 99.96, 94.23, 2.15), ("7.47", "0.04", "2.51", "17.14")),
    "RandL": ((4.80, 99.55, 91.31, 41.95), ("3.11", "0.45", "0.41", "22.66")),
    "GA": ((0.40, 99.61, 94.34, 1.22), ("7.51", "0.39", "2.62", "18.07")),
    "SalUn": ((7.54, 98.06, 89.93, 23.08), ("0.37", "1.94", "1.79", "3.79")),
}
