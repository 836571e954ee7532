class InvalidArgumentError(Exception):
    def __init__(self, argument_name, requirement):
        self.message = f"{argument_name} must be {requirement}."
        super().__init__(self.message)


class NotIntegerError(InvalidArgumentError):
    def __init__(self, argument_name):
        super().__init__(argument_name, "an integer")


class InvalidCertificateError(InvalidArgumentError):
    def __init__(self, requirement):
        super().__init__("AE certificate", requirement)


class MarketSpecError(ValueError):
    def __init__(self, message="Invalid market specification."):
        self.message = message
        super().__init__(self.message)


class SchemaError(MarketSpecError):
    def __init__(self, field, requirement, where="document"):
        super().__init__(f"{where}: field '{field}' {requirement}.")


class ProbabilitySumError(MarketSpecError):
    def __init__(self, node, total):
        super().__init__(f"node {node}: probability sum {total:g} ≠ 1")


class NegativeProbabilityError(MarketSpecError):
    def __init__(self, node):
        super().__init__(f"node {node}: prior vertex has a negative entry")


class OrphanNodeError(MarketSpecError):
    def __init__(self, node):
        super().__init__(f"node {node} has no parent in the tree")


class EmptyVertexListError(MarketSpecError):
    def __init__(self, node):
        super().__init__(f"node {node}: prior vertex list is empty")


class UnknownNodeError(KeyError):
    def __init__(self, node, message="Unknown node"):
        self.message = f"{message}: {node}"
        super().__init__(self.message)


class UtilitySpecError(ValueError):
    def __init__(self, message="Invalid utility specification."):
        self.message = message
        super().__init__(self.message)


class NonMonotoneUtilityError(UtilitySpecError):
    def __init__(self, node, x):
        super().__init__(f"utility at node {node} decreases near x={x:g}")


class GuardExceededError(Exception):
    def __init__(self, what, size, limit):
        self.message = f"{what}: {size} exceeds the configured limit {limit}"
        super().__init__(self.message)


class LPError(ArithmeticError):
    def __init__(self, message="Linear program could not be solved."):
        self.message = message
        super().__init__(self.message)


class InfeasibleError(LPError):
    def __init__(self, message="Linear program is infeasible."):
        super().__init__(message)


class UnboundedError(LPError):
    def __init__(self, message="Linear program is unbounded."):
        super().__init__(message)


class HConditionError(Exception):
    def __init__(self, node):
        self.message = (
            f"node {node}: 0 is not in the relative interior of the kernel support "
            "or its affine hull differs from the full support"
        )
        super().__init__(self.message)


class AssumptionFailureError(Exception):
    def __init__(self, assumption, detail=""):
        self.assumption = assumption
        self.message = " ".join([f"Assumption '{assumption}' fails.", detail]).strip()
        super().__init__(self.message)
