//! Published simulation moments, kept as printed so that rounding of each
//! cell can be taken into account when comparing.

use serde::Serialize;

/// Column keys, in table order.
pub const COLUMNS: [&str; 5] = ["bau", "unconstrained", "constrained:0", "constrained:gamma", "constrained:1"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TableId {
    Means,
    Stds,
    Welfare,
}

impl TableId {
    pub fn parse(s: &str) -> Option<TableId> {
        match s {
            "means" => Some(TableId::Means),
            "stds" => Some(TableId::Stds),
            "welfare" => Some(TableId::Welfare),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TableId::Means => "means",
            TableId::Stds => "stds",
            TableId::Welfare => "welfare",
        }
    }
}

pub const WELFARE_ROWS: [&str; 3] = ["W_t", "U^S_t", "U^H_t"];

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceEntry {
    pub table: TableId,
    pub preset: &'static str,
    pub source: &'static str,
    pub row: &'static str,
    pub column: &'static str,
    pub printed: &'static str,
}

impl ReferenceEntry {
    pub fn value(&self) -> f64 {
        self.printed.parse().expect("reference cells are numeric")
    }

    /// Half a unit in the last printed digit.
    pub fn half_unit(&self) -> f64 {
        let decimals = self.printed.split_once('.').map_or(0, |(_, d)| d.len());
        0.5 * 10f64.powi(-(decimals as i32))
    }
}

struct Block {
    preset: &'static str,
    means_source: &'static str,
    stds_source: &'static str,
    means: &'static str,
    stds: &'static str,
}

const BLOCKS: [Block; 7] = [
    Block {
        preset: "baseline",
        means_source: "published means",
        stds_source: "published volatilities",
        means: "
Y_t         1.002    0.996    0.992    0.995    0.998
I_t         0.212    0.208    0.206    0.208    0.210
f(mu_t)Y_t  0.000    0.002    0.005    0.002    0.001
C_t         0.790    0.785    0.781    0.785    0.787
C^S_t       0.827    0.785    0.820    0.820    0.816
C^H_t       0.641    0.785    0.623    0.643    0.675
V^X_t       0.034    0.020    0.032    0.031    0.028
tau_t       0.000    0.020    0.032    0.020    0.010
E_t         1.001    0.676    0.580    0.675    0.780
tau_tE_t    0.000    0.014    0.019    0.014    0.008
X_t         476.84   321.79   276.13   321.42   371.54
mu_t        0.000    0.322    0.417    0.322    0.218
W_t         -108.65  -69.895  -74.368  -77.856  -81.622
U^S_t       -77.078  -69.895  -54.302  -59.020  -66.184
U^H_t       -234.95  -69.895  -154.63  -153.20  -143.37
",
        stds: "
log(Y_t)         3.62   3.68  3.55   3.54   3.51
log(I_t)         8.12   8.53  7.89   7.84   7.66
log(C_t)         2.54   2.55  2.52   2.51   2.50
log(C^S_t)       2.35   2.55  2.35   2.32   2.22
log(C^H_t)       3.62   2.55  3.52   3.57   4.03
log(lambda^H_t)  12.86  0.00  10.33  11.53  17.85
log(tau_t)       0.00   4.86  3.76   6.37   13.06
log(E_t)         2.52   1.77  1.99   1.12   0.66
log(V^X_t)       3.73   4.86  3.76   3.65   3.22
",
    },
    Block {
        preset: "gamma_low",
        means_source: "published means",
        stds_source: "published volatilities",
        means: "
Y_t         1.002    0.996    0.994    0.995    0.997
I_t         0.212    0.208    0.207    0.208    0.209
f(mu_t)Y_t  0.000    0.002    0.003    0.002    0.001
C_t         0.790    0.785    0.783    0.785    0.787
C^S_t       0.808    0.785    0.802    0.802    0.794
C^H_t       0.642    0.785    0.626    0.643    0.726
V^X_t       0.027    0.020    0.026    0.025    0.022
tau_t       0.000    0.020    0.026    0.020    0.014
E_t         1.001    0.676    0.628    0.675    0.739
tau_tE_t    0.000    0.014    0.016    0.014    0.010
X_t         476.91   321.79   299.10   321.58   352.14
mu_t        0.000    0.322    0.369    0.322    0.258
W_t         -101.37  -69.895  -72.427  -74.006  -74.369
U^S_t       -84.863  -69.895  -61.520  -64.216  -70.803
U^H_t       -234.92  -69.895  -160.67  -153.22  -103.22
",
        stds: "
log(Y_t)         3.68   3.68  3.61   3.61   3.50
log(I_t)         8.43   8.53  8.19   8.16   7.65
log(C_t)         2.55   2.55  2.53   2.53   2.48
log(C^S_t)       2.45   2.55  2.44   2.43   2.20
log(C^H_t)       3.68   2.55  3.58   3.63   5.20
log(lambda^H_t)  13.03  0.00  10.67  11.69  44.57
log(tau_t)       0.00   4.86  4.18   5.69   19.20
log(E_t)         2.56   1.77  1.88   1.39   1.15
log(V^X_t)       4.30   4.86  4.18   4.15   3.42
",
    },
    Block {
        preset: "gamma_high",
        means_source: "published means",
        stds_source: "published volatilities",
        means: "
Y_t         1.002    0.996    0.988    0.995    0.998
I_t         0.212    0.208    0.204    0.208    0.210
f(mu_t)Y_t  0.000    0.002    0.008    0.002    0.001
C_t         0.790    0.785    0.776    0.785    0.787
C^S_t       0.863    0.785    0.854    0.854    0.850
C^H_t       0.641    0.785    0.617    0.643    0.659
V^X_t       0.050    0.020    0.046    0.042    0.040
tau_t       0.000    0.020    0.046    0.020    0.010
E_t         1.001    0.676    0.488    0.675    0.777
tau_tE_t    0.000    0.014    0.023    0.014    0.008
X_t         476.74   321.79   232.61   321.19   370.09
mu_t        0.000    0.322    0.507    0.323    0.221
W_t         -120.81  -69.895  -76.698  -84.384  -89.286
U^S_t       -64.579  -69.895  -43.433  -50.503  -56.064
U^H_t       -234.98  -69.895  -144.24  -153.17  -156.74
",
        stds: "
log(Y_t)         3.51   3.68  3.45   3.44   3.42
log(I_t)         7.63   8.53  7.44   7.34   7.23
log(C_t)         2.51   2.55  2.50   2.48   2.49
log(C^S_t)       2.18   2.55  2.20   2.15   2.08
log(C^H_t)       3.51   2.55  3.43   3.47   3.68
log(lambda^H_t)  12.62  0.00  9.78   11.29  14.06
log(tau_t)       0.00   4.86  3.32   7.26   11.14
log(E_t)         2.45   1.77  2.29   0.77   0.83
log(V^X_t)       3.20   4.86  3.32   3.08   2.81
",
    },
    Block {
        preset: "theta1_high",
        means_source: "published means",
        stds_source: "published volatilities",
        means: "
Y_t         1.002    0.995    0.990    0.995    0.998
I_t         0.212    0.208    0.205    0.208    0.210
f(mu_t)Y_t  0.000    0.001    0.003    0.001    0.000
C_t         0.790    0.786    0.782    0.786    0.788
C^S_t       0.827    0.786    0.823    0.821    0.815
C^H_t       0.641    0.786    0.620    0.645    0.680
V^X_t       0.034    0.020    0.035    0.031    0.027
tau_t       0.000    0.020    0.035    0.020    0.010
E_t         1.001    0.836    0.778    0.836    0.889
tau_tE_t    0.000    0.017    0.027    0.017    0.009
X_t         476.84   398.27   370.40   397.97   423.23
mu_t        0.000    0.161    0.216    0.161    0.110
W_t         -108.65  -81.078  -91.70   -91.245  -90.418
U^S_t       -77.078  -81.078  -63.939  -68.044  -73.593
U^H_t       -234.95  -81.078  -202.74  -184.05  -157.72
",
        stds: "
log(Y_t)         3.62   3.72  3.58   3.57   3.51
log(I_t)         8.12   8.66  8.02   7.95   7.66
log(C_t)         2.54   2.57  2.54   2.53   2.51
log(C^S_t)       2.35   2.57  2.37   2.33   2.18
log(C^H_t)       3.62   2.57  3.55   3.64   4.27
log(lambda^H_t)  12.86  0.00  11.04  12.57  21.18
log(tau_t)       0.00   5.08  3.87   6.85   14.77
log(E_t)         2.52   2.23  2.25   1.88   1.53
log(V^X_t)       3.73   5.08  3.87   3.66   3.05
",
    },
    Block {
        preset: "sigma_low",
        means_source: "published means",
        stds_source: "published volatilities",
        means: "
Y_t         1.001    0.994    0.993    0.994    0.996
I_t         0.212    0.208    0.207    0.208    0.209
f(mu_t)Y_t  0.000    0.002    0.003    0.002    0.001
C_t         0.789    0.784    0.783    0.784    0.786
C^S_t       0.827    0.784    0.822    0.820    0.811
C^H_t       0.641    0.784    0.627    0.642    0.686
V^X_t       0.024    0.020    0.024    0.024    0.022
tau_t       0.000    0.020    0.024    0.020    0.015
E_t         1.001    0.676    0.643    0.676    0.728
tau_tE_t    0.000    0.014    0.015    0.014    0.011
X_t         476.45   321.85   306.43   321.80   346.72
mu_t        0.000    0.321    0.353    0.321    0.270
W_t         -98.339  -88.096  -88.958  -89.357  -89.860
U^S_t       -85.917  -88.096  -77.764  -79.595  -81.735
U^H_t       -128.49  -88.096  -114.64  -112.52  -105.71
",
        stds: "
log(Y_t)         3.29   3.34   3.26   3.25   3.24
log(I_t)         6.93   7.32   6.82   6.80   6.68
log(C_t)         2.50   2.52   2.50   2.50   2.49
log(C^S_t)       2.37   2.52   2.39   2.38   2.31
log(C^H_t)       3.29   2.52   3.24   3.26   3.48
log(lambda^H_t)  7.98   0.000  6.79   7.40   11.49
log(tau_t)       0.00   2.77   2.54   3.07   5.42
log(E_t)         2.29   1.98   1.99   1.77   1.35
log(V^X_t)       2.68   2.77   2.54   2.53   2.45
",
    },
    Block {
        preset: "chi_high",
        means_source: "published means",
        stds_source: "published volatilities",
        means: "
Y_t         1.004    0.989    0.982    0.989    0.994
I_t         0.213    0.205    0.201    0.205    0.207
f(mu_t)Y_t  0.000    0.008    0.018    0.008    0.003
C_t         0.790    0.777    0.764    0.776    0.783
C^S_t       0.827    0.777    0.803    0.810    0.802
C^H_t       0.642    0.777    0.606    0.640    0.707
V^X_t       0.156    0.045    0.075    0.072    0.057
tau_t       0.000    0.045    0.075    0.045    0.025
E_t         1.002    0.498    0.331    0.497    0.636
tau_tE_t    0.000    0.022    0.025    0.022    0.016
X_t         477.37   237.26   157.48   236.47   302.84
mu_t        0.000    0.498    0.665    0.499    0.360
W_t         -709.19  -110.21  -94.71   -126.24  -156.96
U^S_t       -315.55  -110.21  -66.69   -91.18   -132.10
U^H_t       -2283.80 -110.21  -206.80  -266.50  -256.39
",
        stds: "
log(Y_t)         3.94   3.75   3.57   3.56   3.42
log(I_t)         9.27   8.77   8.03   7.89   7.18
log(C_t)         2.61   2.53   2.48   2.45   2.39
log(C^S_t)       2.38   2.53   2.30   2.25   1.91
log(C^H_t)       3.94   2.53   3.53   3.54   4.75
log(lambda^H_t)  29.82  0.000  11.12  13.77  36.85
log(tau_t)       0.00   5.27   3.58   7.32   21.42
log(E_t)         2.74   1.30   2.71   1.01   3.81
log(V^X_t)       5.98   5.27   3.58   3.36   2.27
",
    },
    Block {
        preset: "eps_high",
        means_source: "published means",
        stds_source: "published volatilities",
        means: "
Y_t         1.002    0.995    0.991    0.995    0.998
I_t         0.212    0.208    0.206    0.208    0.21
f(mu_t)Y_t  0        0.002    0.005    0.002    0.001
C_t         0.789    0.784    0.78     0.784    0.787
C^S_t       0.827    0.784    0.82     0.82     0.815
C^H_t       0.641    0.784    0.623    0.643    0.674
V^X_t       0.034    0.02     0.032    0.031    0.028
tau_t       0        0.02     0.032    0.02     0.01
E_t         1.001    0.675    0.58     0.675    0.78
tau_tE_t    0        0.014    0.019    0.014    0.008
X_t         476.65   321.45   276.07   321.27   371.52
mu_t        0        0.322    0.416    0.322    0.218
W_t         -108.67  -70.003  -74.413  -77.901  -81.678
U^S_t       -77.233  -70.003  -54.404  -59.126  -66.314
U^H_t       -234.44  -70.003  -154.45  -153     -143.13
",
        stds: "
log(Y_t)         3.13   3.08   3.04   3.05   3.04
log(I_t)         5.43   5.23   5.00   5.06   5.03
log(C_t)         2.51   2.49   2.47   2.49   2.50
log(C^S_t)       2.39   2.49   2.39   2.37   2.29
log(C^H_t)       3.13   2.49   2.97   3.08   3.51
log(lambda^H_t)  7.19   0.00   4.79   6.07   11.29
log(tau_t)       0.00   6.36   5.14   7.09   11.82
log(E_t)         2.18   0.81   0.71   0.62   0.53
log(V^X_t)       5.22   6.36   5.14   5.14   4.73
",
    },
];

/// Presets with embedded reference tables.
pub fn presets() -> impl Iterator<Item = &'static str> {
    BLOCKS.iter().map(|b| b.preset)
}

fn parse(
    text: &'static str,
    preset: &'static str,
    source: &'static str,
    pick: impl Fn(&str) -> Option<TableId>,
) -> Vec<ReferenceEntry> {
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let mut cells = line.split_whitespace();
        let row = cells.next().expect("row label");
        let Some(table) = pick(row) else { continue };
        for (column, printed) in COLUMNS.iter().zip(cells) {
            out.push(ReferenceEntry { table, preset, source, row, column, printed });
        }
    }
    out
}

/// Reference cells for a preset and table, or `None` if the preset has no
/// embedded tables.
pub fn reference_table(preset: &str, table: TableId) -> Option<Vec<ReferenceEntry>> {
    let b = BLOCKS.iter().find(|b| b.preset == preset)?;
    Some(match table {
        TableId::Stds => parse(b.stds, b.preset, b.stds_source, |_| Some(TableId::Stds)),
        TableId::Means | TableId::Welfare => parse(b.means, b.preset, b.means_source, |row| {
            let t = if WELFARE_ROWS.contains(&row) { TableId::Welfare } else { TableId::Means };
            (t == table).then_some(t)
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::PRESETS;
    use crate::simulate::{MEAN_ROWS, STD_ROWS};

    #[test]
    fn every_preset_has_complete_tables() {
        for p in PRESETS {
            let means = reference_table(p, TableId::Means).unwrap();
            let welfare = reference_table(p, TableId::Welfare).unwrap();
            let stds = reference_table(p, TableId::Stds).unwrap();
            assert_eq!(means.len() + welfare.len(), MEAN_ROWS.len() * 5, "{p}");
            assert_eq!(stds.len(), STD_ROWS.len() * 5, "{p}");
            for e in means.iter().chain(&welfare) {
                assert!(MEAN_ROWS.contains(&e.row), "{p} {}", e.row);
                assert!(e.value().is_finite());
            }
            for e in &stds {
                assert!(STD_ROWS.contains(&e.row), "{p} {}", e.row);
            }
        }
        assert!(reference_table("nope", TableId::Means).is_none());
    }

    #[test]
    fn half_unit_follows_printed_digits() {
        let t = reference_table("baseline", TableId::Means).unwrap();
        let x = t.iter().find(|e| e.row == "X_t" && e.column == "bau").unwrap();
        assert_eq!(x.value(), 476.84);
        assert!((x.half_unit() - 0.005).abs() < 1e-15);
    }

    #[test]
    fn headline_cells() {
        let t = reference_table("theta1_high", TableId::Welfare).unwrap();
        let w = |c: &str| t.iter().find(|e| e.row == "W_t" && e.column == c).unwrap().value();
        assert!(w("constrained:1") > w("constrained:0"));
        let s = reference_table("baseline", TableId::Stds).unwrap();
        let tau = s.iter().find(|e| e.row == "log(tau_t)" && e.column == "constrained:1").unwrap();
        assert_eq!(tau.value(), 13.06);
    }

    /// Aggregate welfare is the population-weighted sum of the two groups'
    /// lifetime utilities. Every printed block respects this to rounding
    /// except the saver row of the `sigma_low` block, which is kept as
    /// printed.
    #[test]
    fn printed_welfare_rows_aggregate() {
        for p in PRESETS {
            let gamma = crate::calibration::build_calibration(p, &[]).unwrap().gamma;
            let t = reference_table(p, TableId::Welfare).unwrap();
            let get = |row: &str, col: &str| t.iter().find(|e| e.row == row && e.column == col).unwrap().value();
            for col in COLUMNS {
                let gap = get("W_t", col) - gamma * get("U^H_t", col) - (1.0 - gamma) * get("U^S_t", col);
                let erratum = p == "sigma_low" && col != "unconstrained";
                assert_eq!(gap.abs() > 0.02, erratum, "{p} {col}: {gap}");
            }
        }
    }
}
