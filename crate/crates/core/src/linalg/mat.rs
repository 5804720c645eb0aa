pub type Vec3 = [f64; 3];
pub type Vec4 = [f64; 4];

/// Row-major 3×3 matrix.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Mat3(pub [[f64; 3]; 3]);

/// Row-major 4×4 matrix.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Mat4(pub [[f64; 4]; 4]);

impl Mat3 {
    pub fn identity() -> Self {
        Self::diag([1.0; 3])
    }

    pub fn zeros() -> Self {
        Self([[0.0; 3]; 3])
    }

    pub fn diag(d: Vec3) -> Self {
        let mut m = Self::zeros();
        for i in 0..3 {
            m.0[i][i] = d[i];
        }
        m
    }

    pub fn transpose(&self) -> Self {
        Self(std::array::from_fn(|i| std::array::from_fn(|j| self.0[j][i])))
    }

    pub fn matmul(&self, o: &Mat3) -> Self {
        Self(std::array::from_fn(|i| {
            std::array::from_fn(|j| (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum())
        }))
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        std::array::from_fn(|i| (0..3).map(|k| self.0[i][k] * v[k]).sum())
    }

    pub fn add(&self, o: &Mat3) -> Self {
        Self(std::array::from_fn(|i| std::array::from_fn(|j| self.0[i][j] + o.0[i][j])))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(std::array::from_fn(|i| std::array::from_fn(|j| self.0[i][j] * s)))
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs()))
    }
}

impl Mat4 {
    pub fn identity() -> Self {
        let mut m = Self([[0.0; 4]; 4]);
        for i in 0..4 {
            m.0[i][i] = 1.0;
        }
        m
    }

    pub fn transpose(&self) -> Self {
        Self(std::array::from_fn(|i| std::array::from_fn(|j| self.0[j][i])))
    }

    pub fn matmul(&self, o: &Mat4) -> Self {
        Self(std::array::from_fn(|i| {
            std::array::from_fn(|j| (0..4).map(|k| self.0[i][k] * o.0[k][j]).sum())
        }))
    }

    pub fn mul_vec(&self, v: Vec4) -> Vec4 {
        std::array::from_fn(|i| (0..4).map(|k| self.0[i][k] * v[k]).sum())
    }

    /// Determinant by cofactor expansion along the first row.
    pub fn det(&self) -> f64 {
        let m = &self.0;
        let minor = |skip: usize| {
            let cols: Vec<usize> = (0..4).filter(|&c| c != skip).collect();
            Mat3(std::array::from_fn(|i| {
                std::array::from_fn(|j| m[i + 1][cols[j]])
            }))
            .det()
        };
        (0..4)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * m[0][j] * minor(j)
            })
            .sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs()))
    }
}

pub(crate) fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn sub3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn scale3(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub(crate) fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

pub(crate) fn cross3(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
