#ifndef FOREST_COREG_ERRORS_HPP
#define FOREST_COREG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace fcoreg {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// geometry
struct AngleAtCutLocus : Error { using Error::Error; };
struct NonPositiveResolution : Error { using Error::Error; };

// ingest
struct ParseError : Error { using Error::Error; };
struct DuplicateNodeId : Error { using Error::Error; };
struct DanglingEdge : Error { using Error::Error; };
struct NonSpdInformation : Error { using Error::Error; };
struct EmptyMission : Error { using Error::Error; };

// preprocess
struct EmptyCrop : Error { using Error::Error; };
struct DegenerateGround : Error { using Error::Error; };
struct AntiparallelNormals : Error { using Error::Error; };

// features
struct FitFailed : Error { using Error::Error; };

// coarse registration
struct GraphTooLarge : Error { using Error::Error; };
struct InsufficientMatches : Error { using Error::Error; };
struct DegenerateConfiguration : Error { using Error::Error; };

// fine registration
struct NoCorrespondences : Error { using Error::Error; };

// graph optimization
struct DisconnectedGraph : Error { using Error::Error; };
struct UnknownNode : Error { using Error::Error; };
struct GaugeUnconstrained : Error { using Error::Error; };
struct SolverDiverged : Error { using Error::Error; };

// synthetic
struct PackingFailed : Error { using Error::Error; };
struct EmptyTrajectory : Error { using Error::Error; };

// analysis
struct NoOverlap : Error { using Error::Error; };

}  // namespace fcoreg

#endif  // FOREST_COREG_ERRORS_HPP
