use std::fmt::{Debug, Display};
use std::ops::{Add, AddAssign, Mul, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Element types a data array may hold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElemType {
    F64,
    F32,
    I64,
    I32,
}

impl ElemType {
    pub fn size_bytes(self) -> usize {
        match self {
            ElemType::F64 | ElemType::I64 => 8,
            ElemType::F32 | ElemType::I32 => 4,
        }
    }

    pub fn is_integer(self) -> bool {
        matches!(self, ElemType::I64 | ElemType::I32)
    }

    pub fn name(self) -> &'static str {
        match self {
            ElemType::F64 => "f64",
            ElemType::F32 => "f32",
            ElemType::I64 => "i64",
            ElemType::I32 => "i32",
        }
    }

    pub fn parse(s: &str) -> Option<ElemType> {
        match s {
            "f64" => Some(ElemType::F64),
            "f32" => Some(ElemType::F32),
            "i64" => Some(ElemType::I64),
            "i32" => Some(ElemType::I32),
            _ => None,
        }
    }
}

/// Typed storage for a data array.
#[derive(Clone, Debug, PartialEq)]
pub enum Values {
    F64(Vec<f64>),
    F32(Vec<f32>),
    I64(Vec<i64>),
    I32(Vec<i32>),
}

impl Values {
    pub fn zeros(ty: ElemType, len: usize) -> Values {
        match ty {
            ElemType::F64 => Values::F64(vec![0.0; len]),
            ElemType::F32 => Values::F32(vec![0.0; len]),
            ElemType::I64 => Values::I64(vec![0; len]),
            ElemType::I32 => Values::I32(vec![0; len]),
        }
    }

    pub fn elem_type(&self) -> ElemType {
        match self {
            Values::F64(_) => ElemType::F64,
            Values::F32(_) => ElemType::F32,
            Values::I64(_) => ElemType::I64,
            Values::I32(_) => ElemType::I32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Values::F64(v) => v.len(),
            Values::F32(v) => v.len(),
            Values::I64(v) => v.len(),
            Values::I32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Returns a new array with `out[dst(i)] = self[i]`.
    pub fn scatter(&self, dst: impl Fn(usize) -> usize) -> Values {
        fn go<T: Copy + Default>(v: &[T], dst: &dyn Fn(usize) -> usize) -> Vec<T> {
            let mut out = vec![T::default(); v.len()];
            for (i, &x) in v.iter().enumerate() {
                out[dst(i)] = x;
            }
            out
        }
        match self {
            Values::F64(v) => Values::F64(go(v, &dst)),
            Values::F32(v) => Values::F32(go(v, &dst)),
            Values::I64(v) => Values::I64(go(v, &dst)),
            Values::I32(v) => Values::I32(go(v, &dst)),
        }
    }

    /// Formats entry `i` so that parsing it back yields the identical value.
    pub fn format_entry(&self, i: usize) -> String {
        match self {
            Values::F64(v) => format!("{:?}", v[i]),
            Values::F32(v) => format!("{:?}", v[i]),
            Values::I64(v) => v[i].to_string(),
            Values::I32(v) => v[i].to_string(),
        }
    }
}

/// Numeric element type usable by kernels.
pub trait Scalar:
    Copy
    + Default
    + PartialEq
    + PartialOrd
    + Debug
    + Display
    + FromStr
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + AddAssign
    + 'static
{
    const ELEM: ElemType;

    fn from_i64(v: i64) -> Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    /// Square root for floats, integer square root of `|x|` for integers.
    fn root(self) -> Self;

    fn slice(values: &Values) -> Option<&[Self]>;
    fn slice_mut(values: &mut Values) -> Option<&mut Vec<Self>>;
    fn wrap(v: Vec<Self>) -> Values;
}

macro_rules! float_scalar {
    ($t:ty, $variant:ident) => {
        impl Scalar for $t {
            const ELEM: ElemType = ElemType::$variant;
            fn from_i64(v: i64) -> Self {
                v as $t
            }
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn root(self) -> Self {
                self.abs().sqrt()
            }
            fn slice(values: &Values) -> Option<&[Self]> {
                match values {
                    Values::$variant(v) => Some(v),
                    _ => None,
                }
            }
            fn slice_mut(values: &mut Values) -> Option<&mut Vec<Self>> {
                match values {
                    Values::$variant(v) => Some(v),
                    _ => None,
                }
            }
            fn wrap(v: Vec<Self>) -> Values {
                Values::$variant(v)
            }
        }
    };
}

macro_rules! int_scalar {
    ($t:ty, $variant:ident) => {
        impl Scalar for $t {
            const ELEM: ElemType = ElemType::$variant;
            fn from_i64(v: i64) -> Self {
                v as $t
            }
            fn from_f64(v: f64) -> Self {
                v.round() as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn root(self) -> Self {
                (self.unsigned_abs() as f64).sqrt().floor() as $t
            }
            fn slice(values: &Values) -> Option<&[Self]> {
                match values {
                    Values::$variant(v) => Some(v),
                    _ => None,
                }
            }
            fn slice_mut(values: &mut Values) -> Option<&mut Vec<Self>> {
                match values {
                    Values::$variant(v) => Some(v),
                    _ => None,
                }
            }
            fn wrap(v: Vec<Self>) -> Values {
                Values::$variant(v)
            }
        }
    };
}

float_scalar!(f64, F64);
float_scalar!(f32, F32);
int_scalar!(i64, I64);
int_scalar!(i32, I32);
