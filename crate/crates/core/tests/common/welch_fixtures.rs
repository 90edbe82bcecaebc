//! Welch t-test reference values, computed once offline with
//! `scipy.stats.ttest_ind(a, b, equal_var=False)` (SciPy 1.x) and frozen here.

pub struct WelchCase {
    pub a: &'static [f64],
    pub b: &'static [f64],
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

/// a = {1..5}, b = {6..10}
pub const SIMPLE: WelchCase = WelchCase {
    a: &[1.0, 2.0, 3.0, 4.0, 5.0],
    b: &[6.0, 7.0, 8.0, 9.0, 10.0],
    t: -5.0,
    df: 8.0,
    p: 0.001052825793366539,
};

pub const CASES: &[WelchCase] = &[
    WelchCase { a: &[86.781, 0.0, 17.004, 15.743, 0.0, 6.637, 20.214], b: &[17.594, 13.948, 62.735, 29.837, 18.577, 7.229], t: -0.2910713971321313, df: 10.41847792242954, p: 0.7767092866303814 },
    WelchCase { a: &[46.289, 49.475, 47.221], b: &[64.096, 43.638, 48.045, 35.393], t: -0.021503860292886538, df: 3.1463701540226996, p: 0.9841353706631379 },
    WelchCase { a: &[24.532, 22.544, 10.99, 8.459, 0.0, 0.0, 0.0, 34.613, 20.77, 3.769, 0.0], b: &[75.886, 66.033, 20.056, 34.756, 48.044], t: -3.477738262698246, df: 5.104125715103384, p: 0.017119587471951928 },
    WelchCase { a: &[39.072, 0.0, 36.907, 0.0, 21.625, 8.554, 33.772], b: &[67.043, 136.967], t: -2.306347183877717, df: 1.0700474432555611, p: 0.24720678590282663 },
    WelchCase { a: &[0.0, 11.247, 5.78, 14.891, 0.0, 0.0, 34.097, 7.808, 19.881], b: &[16.026, 34.634], t: -1.485922535758082, df: 1.3513420713614113, p: 0.32832202871212723 },
    WelchCase { a: &[0.0, 44.983, 36.272, 15.832, 0.0, 13.147, 0.0, 32.154, 7.512], b: &[14.579, 9.727, 11.527, 11.313, 82.726, 39.043, 20.484, 15.958, 32.526, 28.177, 38.868], t: -1.2878953541943627, df: 17.99991104021971, p: 0.2140942646833508 },
    WelchCase { a: &[14.009, 14.901, 46.832, 54.937, 80.688, 6.418, 0.0, 15.881, 23.549, 16.48], b: &[45.518, 54.346, 70.516, 44.847], t: -2.6463240516190982, df: 11.300148216697535, p: 0.022281925855710438 },
    WelchCase { a: &[29.185, 34.087, 7.678], b: &[31.214, 21.64, 62.026, 25.151, 29.258, 65.756], t: -1.3671886680780927, df: 5.613964136384467, p: 0.22377292832643347 },
    WelchCase { a: &[24.371, 5.234, 0.0, 7.584, 0.0, 13.449, 0.0, 29.616, 34.004, 34.387], b: &[15.203, 28.186, 11.974, 49.265, 21.389, 26.909, 5.876], t: -1.111339272022614, df: 13.191247860915214, p: 0.28626809483202303 },
    WelchCase { a: &[14.247, 28.685, 25.345, 7.336, 47.566, 27.439], b: &[13.8, 45.959, 25.958, 36.244, 85.487, 28.774, 11.048, 47.823, 24.784, 40.224], t: -1.2394537271697115, df: 13.820805735209895, p: 0.23581231248588644 },
    WelchCase { a: &[6.232, 3.246, 83.886], b: &[14.152, 13.008, 119.453, 12.44, 19.555, 18.354, 59.003, 59.109], t: -0.27905878533339173, df: 3.107420700724277, p: 0.797747364149429 },
    WelchCase { a: &[0.0, 13.969, 14.505, 0.0, 14.809, 0.0, 33.685, 0.0], b: &[41.877, 38.885, 47.707, 33.977, 24.392, 80.307, 134.627, 31.904, 34.807, 49.625], t: -3.7567672056103314, df: 11.857347751764266, p: 0.002792570367065968 },
    WelchCase { a: &[0.0, 0.0, 11.682, 56.384, 59.195, 56.651, 0.0], b: &[10.258, 8.576, 13.084, 22.899], t: 1.0857941845094299, df: 6.940690614429494, p: 0.31383586540562025 },
    WelchCase { a: &[23.937, 42.198, 0.0, 13.99, 32.361, 0.0, 5.969, 0.0, 45.031, 9.702, 9.325], b: &[36.383, 16.55, 130.335, 20.342, 27.11], t: -1.3489475342061756, df: 4.457257981979624, p: 0.2418197277944901 },
    WelchCase { a: &[0.0, 14.789, 8.97, 11.645, 9.222, 0.0, 36.728, 5.886, 18.08], b: &[33.763, 36.524, 34.475, 40.912, 128.331, 132.972, 34.039, 17.368, 10.605, 33.552, 48.383], t: -2.9629781794402454, df: 11.76239501321172, p: 0.012085339450585125 },
    WelchCase { a: &[18.626, 0.0, 11.112, 54.0, 9.426, 41.518], b: &[79.915, 51.49, 84.942, 32.146, 93.267, 46.777, 20.144, 40.902], t: -2.655295441093971, df: 11.948915456962991, p: 0.021038117654277703 },
    WelchCase { a: &[0.0, 32.164], b: &[54.495, 35.528, 7.915, 30.687], t: -0.8588210745082873, df: 1.7608846637997515, p: 0.49131095872977404 },
    WelchCase { a: &[28.626, 30.444, 7.257, 14.095, 10.219, 0.0, 19.588], b: &[33.426, 35.652, 169.891], t: -1.4101998997966254, df: 2.035182796068129, p: 0.29189801961602085 },
    WelchCase { a: &[8.057, 22.484, 24.735, 16.825, 11.655, 30.822, 5.944], b: &[49.789, 39.464, 29.781, 29.94, 26.691, 77.545, 44.791], t: -3.3705121653374515, df: 9.060337857571056, p: 0.00817223493773898 },
    WelchCase { a: &[16.437, 13.256, 32.116, 25.302, 50.293], b: &[51.642, 48.187, 58.547, 103.759, 48.851, 18.725, 69.925], t: -2.514827260932207, df: 9.70185527415888, p: 0.031314227172312546 },
];
