use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// The 16 primary industrial categories of the 1994 national industry
/// classification standard, in standard order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    AFAHF,
    EI,
    M,
    EGWPSI,
    BI,
    GPWC,
    TSCS,
    WRTC,
    FI,
    RE,
    SS,
    HSSW,
    ECARFT,
    SRTS,
    GAPASO,
    OI,
}

pub const NUM_CATEGORIES: usize = 16;

impl Category {
    pub const ALL: [Category; NUM_CATEGORIES] = [
        Category::AFAHF,
        Category::EI,
        Category::M,
        Category::EGWPSI,
        Category::BI,
        Category::GPWC,
        Category::TSCS,
        Category::WRTC,
        Category::FI,
        Category::RE,
        Category::SS,
        Category::HSSW,
        Category::ECARFT,
        Category::SRTS,
        Category::GAPASO,
        Category::OI,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Category> {
        Self::ALL.get(i).copied()
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Category::AFAHF => "AFAHF",
            Category::EI => "EI",
            Category::M => "M",
            Category::EGWPSI => "EGWPSI",
            Category::BI => "BI",
            Category::GPWC => "GPWC",
            Category::TSCS => "TSCS",
            Category::WRTC => "WRTC",
            Category::FI => "FI",
            Category::RE => "RE",
            Category::SS => "SS",
            Category::HSSW => "HSSW",
            Category::ECARFT => "ECARFT",
            Category::SRTS => "SRTS",
            Category::GAPASO => "GAPASO",
            Category::OI => "OI",
        }
    }

    pub fn english(self) -> &'static str {
        match self {
            Category::AFAHF => "Agriculture, forestry, animal husbandry and fishery",
            Category::EI => "Extractive industries",
            Category::M => "Manufacturing",
            Category::EGWPSI => "Electricity, gas and water production and supply industry",
            Category::BI => "Building industry",
            Category::GPWC => "Geological prospecting and water conservancy",
            Category::TSCS => "Transport, storage and communications sector",
            Category::WRTC => "Wholesale, retail trade and catering",
            Category::FI => "Finance, insurance",
            Category::RE => "Real estate",
            Category::SS => "Social services",
            Category::HSSW => "Health, sports and social welfare",
            Category::ECARFT => "Education, culture and arts, radio, film and television",
            Category::SRTS => "Scientific research and technical services",
            Category::GAPASO => "Government agencies, party agencies and social organizations",
            Category::OI => "Other industry",
        }
    }

    /// Name as it appears in registration records.
    pub fn chinese(self) -> &'static str {
        match self {
            Category::AFAHF => "农、林、牧、渔业",
            Category::EI => "采掘业",
            Category::M => "制造业",
            Category::EGWPSI => "电力、煤气及水的生产和供应业",
            Category::BI => "建筑业",
            Category::GPWC => "地质勘查业、水利管理业",
            Category::TSCS => "交通运输、仓储及邮电通信业",
            Category::WRTC => "批发和零售贸易、餐饮业",
            Category::FI => "金融、保险业",
            Category::RE => "房地产业",
            Category::SS => "社会服务业",
            Category::HSSW => "卫生、体育和社会福利业",
            Category::ECARFT => "教育、文化艺术及广播电影电视业",
            Category::SRTS => "科学研究和综合技术服务业",
            Category::GAPASO => "国家机关、党政机关和社会团体",
            Category::OI => "其他行业",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownCategory(pub String);

impl fmt::Display for UnknownCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown industrial category `{}`", self.0)
    }
}

impl std::error::Error for UnknownCategory {}

impl FromStr for Category {
    type Err = UnknownCategory;

    /// Accepts the symbol, the Chinese name or the English name.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Category::ALL
            .iter()
            .copied()
            .find(|c| {
                c.symbol().eq_ignore_ascii_case(s)
                    || c.chinese() == s
                    || c.english().eq_ignore_ascii_case(s)
            })
            .ok_or_else(|| UnknownCategory(s.to_string()))
    }
}
